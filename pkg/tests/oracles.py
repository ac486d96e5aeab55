"""Independent reference implementations used as test oracles.

Nothing here imports rawdet's metric, slicing or demosaic code. The evaluator
works in exact rational arithmetic so its comparisons never depend on float
rounding order.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

IOU_THRESHOLDS = [Fraction(50 + 5 * i, 100) for i in range(10)]
INF = float("inf")
RANGES = {
    "downsampled": {"all": (0, INF), "s": (0, 128**2), "m": (128**2, 320**2), "l": (320**2, INF)},
    "sliced": {"all": (0, INF), "s": (0, 64**2), "m": (64**2, 160**2), "l": (160**2, INF)},
}


def exact_iou(a, b) -> Fraction:
    ax, ay, aw, ah = map(Fraction, a)
    bx, by, bw, bh = map(Fraction, b)
    iw = min(ax + aw, bx + bw) - max(ax, bx)
    ih = min(ay + ah, by + bh) - max(ay, by)
    if iw <= 0 or ih <= 0:
        return Fraction(0)
    inter = iw * ih
    return inter / (aw * ah + bw * bh - inter)


def _area(b) -> Fraction:
    return Fraction(b[2]) * Fraction(b[3])


def _in(area, rng) -> bool:
    return rng[0] <= area < rng[1]


def reference_ap(flags: list[bool], n_pos: int) -> float:
    """Interpolated AP straight from the definition: for each recall level
    k/100 take the best precision at any operating point reaching it."""
    if n_pos == 0:
        return -1.0
    points = []
    tp = fp = 0
    for f in flags:
        tp += f
        fp += not f
        points.append((Fraction(tp, n_pos), Fraction(tp, tp + fp)))
    total = Fraction(0)
    for k in range(101):
        r = Fraction(k, 100)
        reach = [p for rec, p in points if rec >= r]
        total += max(reach) if reach else 0
    return float(total / 101)


def _match_image(gts, dets, thr):
    """gts: list of (box, ignore); dets: ranked boxes. Returns per-det status."""
    taken = [False] * len(gts)
    status = []
    for d in dets:
        best = None
        for want_ignored in (False, True):
            best_iou = None
            for j, (g, ign) in enumerate(gts):
                if taken[j] or ign != want_ignored:
                    continue
                v = exact_iou(d, g)
                if v >= thr and (best_iou is None or v > best_iou):
                    best, best_iou = j, v
            if best is not None:
                taken[best] = True
                status.append("ign" if want_ignored else "tp")
                break
        else:
            status.append("fp")
    return status


def _category_ap(images, gt, dets, cat, thr, rng, max_dets):
    n_pos = 0
    ranked = []
    for img in sorted(images):
        g = [(a["bbox"], a["ignore"] or not _in(_area(a["bbox"]), rng)) for a in gt if a["image_id"] == img and a["category_id"] == cat]
        n_pos += sum(not ign for _, ign in g)
        d = [x for x in dets if x["image_id"] == img and x["category_id"] == cat]
        d = sorted(d, key=lambda x: -x["score"])[:max_dets]
        status = _match_image(g, [x["bbox"] for x in d], thr)
        for r, (x, s) in enumerate(zip(d, status)):
            if s == "ign" or (s == "fp" and not _in(_area(x["bbox"]), rng)):
                continue
            ranked.append((-x["score"], img, r, s == "tp"))
    if n_pos == 0:
        return None
    ranked.sort()
    return reference_ap([t for *_, t in ranked], n_pos)


def _mean(vals):
    vals = [v for v in vals if v is not None]
    return sum(vals) / len(vals) if vals else -1.0


def _slice_ap(images, gt, dets, cats, thresholds, rng, max_dets):
    return _mean(_category_ap(images, gt, dets, c, t, rng, max_dets) for t in thresholds for c in cats)


CONDITION = {
    "APnormal": lambda c: c in ("indoor/daylight", "outdoor/daylight/clear"),
    "APlow": lambda c: "/lowlight" in c,
    "APrain": lambda c: c.endswith("/rain") or c.endswith("/rain_fog"),
    "APfog": lambda c: c.endswith("/fog") or c.endswith("/rain_fog"),
}


def reference_evaluate(doc: dict, dets: list[dict], setting: str = "downsampled", max_dets: int = 100) -> dict:
    """Full report from a COCO-style dict and a list of detection dicts."""
    cats = [c["id"] for c in doc["categories"]]
    gt = [dict(a, ignore=bool(a.get("ignore", a.get("iscrowd", 0)))) for a in doc["annotations"]]
    images = [im["id"] for im in doc["images"]]
    ranges = RANGES[setting]
    out = {
        "AP": _slice_ap(images, gt, dets, cats, IOU_THRESHOLDS, ranges["all"], max_dets),
        "AP50": _slice_ap(images, gt, dets, cats, IOU_THRESHOLDS[:1], ranges["all"], max_dets),
        "AP75": _slice_ap(images, gt, dets, cats, IOU_THRESHOLDS[5:6], ranges["all"], max_dets),
        "APs": _slice_ap(images, gt, dets, cats, IOU_THRESHOLDS, ranges["s"], max_dets),
        "APm": _slice_ap(images, gt, dets, cats, IOU_THRESHOLDS, ranges["m"], max_dets),
        "APl": _slice_ap(images, gt, dets, cats, IOU_THRESHOLDS, ranges["l"], max_dets),
    }
    for key, keep in CONDITION.items():
        ids = {im["id"] for im in doc["images"] if keep(im["condition"])}
        sub_gt = [a for a in gt if a["image_id"] in ids]
        sub_dets = [d for d in dets if d["image_id"] in ids]
        out[key] = _slice_ap(sorted(ids), sub_gt, sub_dets, cats, IOU_THRESHOLDS, ranges["all"], max_dets)
    return out


# ---------------------------------------------------------------------------
# Slicing
# ---------------------------------------------------------------------------


def reference_slice(width, height, boxes, tile, overlap, keep):
    """Enumerate every tile origin the slow way and keep boxes whose visible
    fraction reaches ``keep``. Returns {(x0, y0): [clipped boxes]}."""
    stride = tile - overlap

    def origins(n):
        if n <= tile:
            return [0]
        out = []
        x = 0
        while True:
            if x + tile >= n:
                out.append(n - tile)
                break
            out.append(x)
            x += stride
        return sorted(set(out))

    result = {}
    for y0 in origins(height):
        for x0 in origins(width):
            tw, th = min(tile, width), min(tile, height)
            kept = []
            for x, y, w, h in boxes:
                ix1, iy1 = max(x, x0), max(y, y0)
                ix2, iy2 = min(x + w, x0 + tw), min(y + h, y0 + th)
                if ix2 <= ix1 or iy2 <= iy1:
                    continue
                if Fraction(ix2 - ix1) * Fraction(iy2 - iy1) >= Fraction(keep) * Fraction(w) * Fraction(h):
                    kept.append((ix1 - x0, iy1 - y0, ix2 - ix1, iy2 - iy1))
            result[(x0, y0)] = kept
    return result


# ---------------------------------------------------------------------------
# Demosaic
# ---------------------------------------------------------------------------

CHANNEL = {"R": 0, "G": 1, "B": 2}


def reference_demosaic(x: np.ndarray, pattern: str) -> np.ndarray:
    """Per-pixel bilinear interpolation: each missing channel is the mean of
    the same-colour samples in the 3x3 neighbourhood, with mirrored borders."""
    h, w = x.shape
    colour = np.empty((h, w), dtype=np.int64)
    for yy in range(h):
        for xx in range(w):
            colour[yy, xx] = CHANNEL[pattern[2 * (yy % 2) + (xx % 2)]]

    def mirror(i, n):
        if i < 0:
            return -i
        if i >= n:
            return 2 * n - 2 - i
        return i

    out = np.zeros((h, w, 3))
    for yy in range(h):
        for xx in range(w):
            for c in range(3):
                if colour[yy, xx] == c:
                    out[yy, xx, c] = x[yy, xx]
                    continue
                vals = []
                for dy in (-1, 0, 1):
                    for dx in (-1, 0, 1):
                        if dy == dx == 0:
                            continue
                        py, px = mirror(yy + dy, h), mirror(xx + dx, w)
                        # mirroring preserves the CFA phase, so colour is read at the source site
                        if colour[py, px] == c:
                            vals.append(x[py, px])
                out[yy, xx, c] = sum(vals) / len(vals)
    return out
