"""Dataset statistics: instance/category counts, box sizes, object-centre
density and image brightness, plus JSON/CSV report writers."""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from rawdet.core import ConditionTag, DatasetIndex, SRGBImage, ValidationError, condition_count_table


def _require_images(index: DatasetIndex) -> None:
    if not index.images:
        raise ValidationError("index has no images")


def instances_per_image(index: DatasetIndex) -> tuple[dict[int, int], float]:
    """Histogram ``{count: n_images}`` and mean instances per image."""
    _require_images(index)
    counts = Counter(a.image_id for a in index.annotations)
    hist = Counter(counts.get(im.id, 0) for im in index.images)
    return dict(sorted(hist.items())), len(index.annotations) / len(index.images)


def categories_per_image(index: DatasetIndex) -> dict[int, int]:
    """Histogram ``{distinct categories: n_images}``."""
    _require_images(index)
    cats: dict[int, set[int]] = {im.id: set() for im in index.images}
    for a in index.annotations:
        cats[a.image_id].add(a.category_id)
    return dict(sorted(Counter(len(c) for c in cats.values()).items()))


def relative_box_sizes(index: DatasetIndex, bins: int = 50) -> tuple[list[float], dict]:
    """sqrt(box area / image area) per annotation, with a histogram on (0, 1]."""
    dims = {im.id: (im.width, im.height) for im in index.images}
    sizes = []
    for a in index.annotations:
        w, h = dims[a.image_id]
        sizes.append(math.sqrt(a.bbox.area() / (w * h)))
    counts, edges = np.histogram(np.clip(sizes, 0.0, 1.0), bins=bins, range=(0.0, 1.0))
    return sizes, {"edges": edges.tolist(), "counts": counts.tolist()}


def instances_per_category(index: DatasetIndex) -> list[tuple[str, int]]:
    """``(name, count)`` by count descending, ties by category id ascending."""
    names = {c.id: c.name for c in index.categories}
    counts = Counter(a.category_id for a in index.annotations)
    order = sorted(counts, key=lambda cid: (-counts[cid], cid))
    return [(names[cid], counts[cid]) for cid in order]


def gray_value(img: SRGBImage) -> float:
    """Mean of (r + g + b) / 3 over 8-bit values."""
    return float(img.data.astype(np.float64).mean())


def brightness_distribution(
    images: Iterable[tuple[ConditionTag, SRGBImage]],
    bins: int = 32,
) -> dict[str, dict]:
    """Density histograms of per-image gray value, grouped as ``place/light``."""
    groups: dict[str, list[float]] = {}
    for tag, img in images:
        key = f"{tag.place.value}/{tag.light.value}"
        groups.setdefault(key, []).append(gray_value(img))
    out = {}
    for key in sorted(groups):
        vals = groups[key]
        counts, edges = np.histogram(vals, bins=bins, range=(0.0, 255.0))
        out[key] = {
            "values": vals,
            "edges": edges.tolist(),
            "density": (counts / counts.sum()).tolist(),
        }
    return out


def center_heatmap(index: DatasetIndex, grid: int = 64) -> np.ndarray:
    """Normalised ``grid x grid`` histogram of box centres (row = y)."""
    if not index.annotations:
        raise ValidationError("no annotations to bin")
    dims = {im.id: (im.width, im.height) for im in index.images}
    heat = np.zeros((grid, grid), dtype=np.float64)
    for a in index.annotations:
        w, h = dims[a.image_id]
        cx = (a.bbox.x + a.bbox.w / 2) / w
        cy = (a.bbox.y + a.bbox.h / 2) / h
        ix = min(grid - 1, max(0, int(cx * grid)))
        iy = min(grid - 1, max(0, int(cy * grid)))
        heat[iy, ix] += 1
    return heat / heat.sum()


def build_report(index: DatasetIndex, images: Sequence[tuple[ConditionTag, SRGBImage]] | None = None) -> dict:
    hist, mean = instances_per_image(index)
    sizes, size_hist = relative_box_sizes(index)
    report = {
        "images": len(index.images),
        "instances": len(index.annotations),
        "instances_per_image": {"mean": mean, "histogram": {str(k): v for k, v in hist.items()}},
        "categories_per_image": {str(k): v for k, v in categories_per_image(index).items()},
        "relative_box_size": size_hist,
        "instances_per_category": [{"name": n, "count": c} for n, c in instances_per_category(index)],
        "conditions": {str(k): v for k, v in condition_count_table(index).items()},
    }
    if index.annotations:
        report["center_heatmap"] = center_heatmap(index).tolist()
    if images is not None:
        report["brightness"] = brightness_distribution(images)
    return report


def write_report(report: dict, out_dir: str | Path) -> None:
    """report.json plus one CSV per figure-style series."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")

    def rows(name, header, data):
        with open(out / name, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(header)
            w.writerows(data)

    rows("instances_per_image.csv", ["instances", "images"], report["instances_per_image"]["histogram"].items())
    rows("categories_per_image.csv", ["categories", "images"], report["categories_per_image"].items())
    rs = report["relative_box_size"]
    rows(
        "relative_box_size.csv",
        ["bin_lo", "bin_hi", "count"],
        zip(rs["edges"][:-1], rs["edges"][1:], rs["counts"]),
    )
    rows(
        "instances_per_category.csv",
        ["category", "count"],
        ((e["name"], e["count"]) for e in report["instances_per_category"]),
    )
    if "center_heatmap" in report:
        with open(out / "center_heatmap.csv", "w", newline="") as f:
            csv.writer(f).writerows(report["center_heatmap"])
    for key, d in report.get("brightness", {}).items():
        name = "brightness_" + key.replace("/", "_") + ".csv"
        rows(name, ["bin_lo", "bin_hi", "density"], zip(d["edges"][:-1], d["edges"][1:], d["density"]))
