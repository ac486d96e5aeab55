"""COCO-style box AP with configurable area ranges and capture-condition
slices (low-light, rain, fog, normal).

Matching and accumulation follow the usual COCO conventions: detections are
ranked by score (stable, so ties keep input order), each claims the best
unmatched non-ignored ground truth at IoU >= threshold, falling back to an
unmatched ignored one (the detection is then ignored too); precision is
made monotone from the right and sampled at 101 recall points.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from rawdet.core import (
    UNDEFINED,
    Annotation,
    BBox,
    ConditionTag,
    DatasetIndex,
    DetectionResult,
    Light,
    MetricsReport,
    ValidationError,
    Weather,
)

# k / 100 is correctly rounded, so a recall of exactly k/100 meets threshold k
RECALL_THRESHOLDS = np.arange(101) / 100.0
IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))

AREA_RANGES = {
    "downsampled": {"all": (0.0, float("inf")), "s": (0.0, 128.0**2), "m": (128.0**2, 320.0**2), "l": (320.0**2, float("inf"))},
    "sliced": {"all": (0.0, float("inf")), "s": (0.0, 64.0**2), "m": (64.0**2, 160.0**2), "l": (160.0**2, float("inf"))},
}


@dataclass(frozen=True)
class EvalConfig:
    iou_thresholds: tuple[float, ...] = IOU_THRESHOLDS
    area_ranges: dict[str, tuple[float, float]] = field(default_factory=lambda: dict(AREA_RANGES["downsampled"]))
    max_dets: int = 100
    setting: str = "downsampled"

    def __post_init__(self):
        t = self.iou_thresholds
        if not t or any(not 0 < v <= 1 for v in t) or any(a >= b for a, b in zip(t, t[1:])):
            raise ValidationError("IoU thresholds must be strictly increasing in (0, 1]")
        if set(self.area_ranges) != {"all", "s", "m", "l"}:
            raise ValidationError("area_ranges needs exactly the keys all, s, m, l")
        s, m, l = (self.area_ranges[k] for k in "sml")
        if not (s[0] < s[1] <= m[0] < m[1] <= l[0] < l[1]):
            raise ValidationError("area ranges must be ordered and non-overlapping")
        if self.max_dets < 1:
            raise ValidationError("max_dets must be positive")

    @classmethod
    def for_setting(cls, setting: str) -> "EvalConfig":
        if setting not in AREA_RANGES:
            raise ValidationError(f"unknown setting {setting!r}; choose downsampled or sliced")
        return cls(area_ranges=dict(AREA_RANGES[setting]), setting=setting)


def iou(a: BBox, b: BBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area() + b.area() - inter)


def iou_matrix(dets: np.ndarray, gts: np.ndarray) -> np.ndarray:
    """Pairwise IoU of (D, 4) and (G, 4) xywh arrays."""
    if len(dets) == 0 or len(gts) == 0:
        return np.zeros((len(dets), len(gts)))
    dx1, dy1 = dets[:, None, 0], dets[:, None, 1]
    dx2, dy2 = dx1 + dets[:, None, 2], dy1 + dets[:, None, 3]
    gx1, gy1 = gts[None, :, 0], gts[None, :, 1]
    gx2, gy2 = gx1 + gts[None, :, 2], gy1 + gts[None, :, 3]
    iw = np.clip(np.minimum(dx2, gx2) - np.maximum(dx1, gx1), 0, None)
    ih = np.clip(np.minimum(dy2, gy2) - np.maximum(dy1, gy1), 0, None)
    inter = iw * ih
    union = (dets[:, 2] * dets[:, 3])[:, None] + (gts[:, 2] * gts[:, 3])[None, :] - inter
    return inter / union


@dataclass
class MatchTable:
    """Per-detection outcome, in ranked order.

    ``order`` maps rank -> input index; ``gt_index`` is the matched ground
    truth (input index) or -1; ``ignored`` marks matches to ignored ground
    truth.
    """

    order: np.ndarray
    gt_index: np.ndarray
    ignored: np.ndarray

    @property
    def tp(self) -> np.ndarray:
        return (self.gt_index >= 0) & ~self.ignored

    @property
    def fp(self) -> np.ndarray:
        return self.gt_index < 0


def _rank(scores: Sequence[float], max_dets: int) -> np.ndarray:
    return np.argsort(-np.asarray(scores, dtype=np.float64), kind="mergesort")[:max_dets]


def _match(ious: np.ndarray, gt_ignore: np.ndarray, thr: float) -> tuple[np.ndarray, np.ndarray]:
    # ious rows are already in ranked detection order
    n_det, n_gt = ious.shape
    taken = np.zeros(n_gt, dtype=bool)
    gt_index = np.full(n_det, -1, dtype=np.int64)
    ignored = np.zeros(n_det, dtype=bool)
    for d in range(n_det):
        row = ious[d]
        for want_ignored in (False, True):
            cand = (~taken) & (gt_ignore == want_ignored) & (row >= thr)
            if cand.any():
                g = int(np.flatnonzero(cand)[np.argmax(row[cand])])
                taken[g] = True
                gt_index[d] = g
                ignored[d] = want_ignored
                break
    return gt_index, ignored


def match_greedy(
    gts: Sequence[BBox],
    dets: Sequence[BBox],
    scores: Sequence[float],
    iou_thr: float,
    max_dets: int = 100,
    gt_ignore: Sequence[bool] | None = None,
) -> MatchTable:
    """Greedy score-ordered matching for one image and category."""
    order = _rank(scores, max_dets)
    gt_arr = np.array([b.to_list() for b in gts], dtype=np.float64).reshape(-1, 4)
    det_arr = np.array([dets[i].to_list() for i in order], dtype=np.float64).reshape(-1, 4)
    ign = np.zeros(len(gts), dtype=bool) if gt_ignore is None else np.asarray(gt_ignore, dtype=bool)
    gt_index, ignored = _match(iou_matrix(det_arr, gt_arr), ign, iou_thr)
    return MatchTable(order, gt_index, ignored)


def average_precision(tp_fp: Sequence[bool], n_positive: int) -> float:
    """101-point interpolated AP of a ranked TP/FP sequence.

    Returns ``UNDEFINED`` when there are no positives.
    """
    if n_positive <= 0:
        return UNDEFINED
    flags = np.asarray(tp_fp, dtype=bool)
    if flags.size == 0:
        return 0.0
    tp = np.cumsum(flags)
    fp = np.cumsum(~flags)
    recall = tp / n_positive
    precision = tp / (tp + fp)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_THRESHOLDS, side="left")
    q = np.where(idx < len(envelope), envelope[np.minimum(idx, len(envelope) - 1)], 0.0)
    return float(q.mean())


# ---------------------------------------------------------------------------
# Full evaluation
# ---------------------------------------------------------------------------


def _check_detections(gt: DatasetIndex, dets: Iterable[DetectionResult]) -> None:
    images = {im.id for im in gt.images}
    cats = {c.id for c in gt.categories}
    for d in dets:
        if d.image_id not in images:
            raise ValidationError(f"detection references unknown image_id {d.image_id}")
        if d.category_id not in cats:
            raise ValidationError(f"detection references unknown category_id {d.category_id}")


def _in_range(area: np.ndarray, rng: tuple[float, float]) -> np.ndarray:
    return (area >= rng[0]) & (area < rng[1])


def ap_table(
    gt: DatasetIndex,
    dets: Sequence[DetectionResult],
    cfg: EvalConfig,
    areas: Sequence[str] = ("all", "s", "m", "l"),
) -> dict[str, np.ndarray]:
    """Per-area ``(T, K)`` arrays of AP, ``UNDEFINED`` where a category has
    no non-ignored ground truth. Categories follow ``gt.categories`` order."""
    cat_ids = [c.id for c in gt.categories]
    image_ids = sorted(im.id for im in gt.images)
    gt_groups: dict[tuple[int, int], list[Annotation]] = defaultdict(list)
    for a in gt.annotations:
        gt_groups[(a.image_id, a.category_id)].append(a)
    det_groups: dict[tuple[int, int], list[DetectionResult]] = defaultdict(list)
    for d in dets:
        det_groups[(d.image_id, d.category_id)].append(d)

    n_thr = len(cfg.iou_thresholds)
    out = {name: np.full((n_thr, len(cat_ids)), UNDEFINED) for name in areas}
    for k, cat in enumerate(cat_ids):
        # per area, per threshold: ranked (score, keep-flag, tp-flag) across images
        scores: list[np.ndarray] = []
        cols = {name: [[] for _ in range(n_thr)] for name in areas}
        n_pos = {name: 0 for name in areas}
        for img in image_ids:
            g = gt_groups.get((img, cat), [])
            d = det_groups.get((img, cat), [])
            if not g and not d:
                continue
            order = _rank([x.score for x in d], cfg.max_dets)
            det_arr = np.array([d[i].bbox.to_list() for i in order], dtype=np.float64).reshape(-1, 4)
            gt_arr = np.array([a.bbox.to_list() for a in g], dtype=np.float64).reshape(-1, 4)
            ious = iou_matrix(det_arr, gt_arr)
            gt_area = gt_arr[:, 2] * gt_arr[:, 3]
            det_area = det_arr[:, 2] * det_arr[:, 3]
            base_ignore = np.array([a.ignore for a in g], dtype=bool)
            scores.append(np.array([d[i].score for i in order], dtype=np.float64))
            for name in areas:
                rng_ = cfg.area_ranges[name]
                gt_ignore = base_ignore | ~_in_range(gt_area, rng_)
                n_pos[name] += int((~gt_ignore).sum())
                det_out = ~_in_range(det_area, rng_)
                for t, thr in enumerate(cfg.iou_thresholds):
                    gt_index, ignored = _match(ious, gt_ignore, thr)
                    matched = gt_index >= 0
                    drop = ignored | (~matched & det_out)
                    cols[name][t].append((matched & ~drop, drop))
        if not scores:
            continue
        all_scores = np.concatenate(scores)
        rank = np.argsort(-all_scores, kind="mergesort")
        for name in areas:
            for t in range(n_thr):
                tp = np.concatenate([c[0] for c in cols[name][t]])[rank]
                drop = np.concatenate([c[1] for c in cols[name][t]])[rank]
                out[name][t, k] = average_precision(tp[~drop], n_pos[name])
    return out


def _mean_defined(a: np.ndarray) -> float:
    v = a[a > UNDEFINED]
    return float(v.mean()) if v.size else UNDEFINED


CONDITION_SLICES: dict[str, Callable[[ConditionTag], bool]] = {
    "ap_normal": lambda c: c.light is Light.DAYLIGHT and c.weather in (Weather.CLEAR, Weather.NONE),
    "ap_low": lambda c: c.light is Light.LOWLIGHT,
    "ap_rain": lambda c: c.weather in (Weather.RAIN, Weather.RAIN_FOG),
    "ap_fog": lambda c: c.weather in (Weather.FOG, Weather.RAIN_FOG),
}


def restrict(gt: DatasetIndex, dets: Sequence[DetectionResult], keep: Callable[[ConditionTag], bool]):
    ids = {im.id for im in gt.images if keep(im.condition)}
    return gt.subset(ids), [d for d in dets if d.image_id in ids]


def evaluate(gt: DatasetIndex, dets: Sequence[DetectionResult], cfg: EvalConfig | None = None) -> MetricsReport:
    cfg = cfg or EvalConfig()
    dets = list(dets)
    _check_detections(gt, dets)
    table = ap_table(gt, dets, cfg)
    thr = list(cfg.iou_thresholds)

    def at(t: float) -> float:
        hits = [i for i, v in enumerate(thr) if abs(v - t) < 1e-9]
        return _mean_defined(table["all"][hits[0]]) if hits else UNDEFINED

    values = {
        "ap": _mean_defined(table["all"]),
        "ap50": at(0.5),
        "ap75": at(0.75),
        "ap_s": _mean_defined(table["s"]),
        "ap_m": _mean_defined(table["m"]),
        "ap_l": _mean_defined(table["l"]),
    }
    for key, keep in CONDITION_SLICES.items():
        sub_gt, sub_dets = restrict(gt, dets, keep)
        values[key] = _mean_defined(ap_table(sub_gt, sub_dets, cfg, areas=("all",))["all"])
    return MetricsReport(**values)
