"""Dataset ingestion, per-condition splitting, annotation down-sampling and
tile slicing."""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path
from typing import Any, Mapping

from rawdet import rng
from rawdet.core import (
    Annotation,
    BBox,
    Category,
    ConditionTag,
    DatasetIndex,
    ImageRecord,
    ValidationError,
)

log = logging.getLogger(__name__)

TILE = 1280
OVERLAP = 300
KEEP_FRACTION = 0.4
MIN_AREA = 32 * 32


class IndexParseError(ValidationError):
    """Annotation file could not be turned into a valid index."""


# ---------------------------------------------------------------------------
# Loading and saving
# ---------------------------------------------------------------------------


def _get(d: Mapping[str, Any], key: str, where: str):
    if not isinstance(d, Mapping):
        raise IndexParseError(f"{where}: expected an object, got {type(d).__name__}")
    if key not in d:
        raise IndexParseError(f"{where}: missing key {key!r}")
    return d[key]


def _parse_bbox(v, where: str) -> BBox:
    if not isinstance(v, (list, tuple)) or len(v) != 4:
        raise IndexParseError(f"{where}: bbox must be [x, y, w, h]")
    try:
        return BBox(*(float(c) for c in v))
    except (TypeError, ValueError) as e:
        raise IndexParseError(f"{where}: {e}") from None


def _int(d: Mapping[str, Any], key: str, where: str) -> int:
    v = _get(d, key, where)
    if isinstance(v, bool) or (isinstance(v, float) and not v.is_integer()):
        raise IndexParseError(f"{where}: {key} must be an integer, got {v!r}")
    try:
        return int(v)
    except (TypeError, ValueError):
        raise IndexParseError(f"{where}: {key} must be an integer, got {v!r}") from None


def parse_index(data: Mapping[str, Any]) -> DatasetIndex:
    """Validate a decoded COCO-style document and build a :class:`DatasetIndex`."""
    images, annotations, categories = [], [], []
    for key in ("categories", "images", "annotations"):
        if not isinstance(_get(data, key, "document"), list):
            raise IndexParseError(f"document: {key} must be a list")
    for i, d in enumerate(_get(data, "categories", "document")):
        where = f"categories[{i}]"
        cat_id = _int(d, "id", where)
        try:
            categories.append(Category(cat_id, str(_get(d, "name", where))))
        except IndexParseError:
            raise
        except ValidationError as e:
            raise IndexParseError(f"{where}: {e}") from None
    for i, d in enumerate(_get(data, "images", "document")):
        where = f"images[{i}]"
        image_id = _int(d, "id", where)
        where = f"images[{i}] (id={image_id})"
        cond = _get(d, "condition", where)
        try:
            tag = ConditionTag.parse(cond)
        except ValidationError as e:
            raise IndexParseError(f"{where}: unknown condition {cond!r}: {e}") from None
        prov = d.get("provenance")
        try:
            images.append(
                ImageRecord(
                    id=image_id,
                    file_path=str(_get(d, "file_name", where)),
                    width=_int(d, "width", where),
                    height=_int(d, "height", where),
                    condition=tag,
                    provenance={k: _int(prov, k, where + " provenance") for k in prov} if prov else None,
                )
            )
        except IndexParseError:
            raise
        except (ValidationError, AttributeError) as e:
            raise IndexParseError(f"{where}: {e}") from None
    image_ids = {im.id for im in images}
    cat_ids = {c.id for c in categories}
    for i, d in enumerate(_get(data, "annotations", "document")):
        where = f"annotations[{i}]"
        ann_id = _int(d, "id", where)
        where = f"annotations[{i}] (id={ann_id})"
        image_id = _int(d, "image_id", where)
        cat_id = _int(d, "category_id", where)
        if image_id not in image_ids:
            raise IndexParseError(f"{where}: unknown image_id {image_id}")
        if cat_id not in cat_ids:
            raise IndexParseError(f"{where}: unknown category_id {cat_id}")
        ignore = bool(d.get("ignore", d.get("iscrowd", 0)))
        bbox = _parse_bbox(_get(d, "bbox", where), where)
        try:
            annotations.append(Annotation(ann_id, image_id, cat_id, bbox, ignore))
        except ValidationError as e:
            raise IndexParseError(f"{where}: {e}") from None
    try:
        return DatasetIndex(images, annotations, categories)
    except ValidationError as e:
        raise IndexParseError(str(e)) from None


def load_index(path: str | Path) -> DatasetIndex:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise IndexParseError(f"{path}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}") from None
    try:
        return parse_index(data)
    except IndexParseError as e:
        raise IndexParseError(f"{path}: {e}") from None


def dump_index(index: DatasetIndex) -> str:
    return json.dumps(index.to_dict(), indent=1, sort_keys=True) + "\n"


def save_index(index: DatasetIndex, path: str | Path) -> None:
    Path(path).write_text(dump_index(index))


# ---------------------------------------------------------------------------
# Split
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SplitResult:
    train: DatasetIndex
    test: DatasetIndex


def split_dataset(index: DatasetIndex, train_fraction: float = 0.7, seed: int = 0) -> SplitResult:
    """Split each capture condition on its own, then merge.

    A condition with ``n`` images contributes ``floor(train_fraction * n)``
    training images, picked by a shuffle keyed on ``(seed, condition)``. The
    floor is taken on the decimal value of ``train_fraction`` so that 0.7
    means exactly 7/10.
    """
    if not 0 < train_fraction < 1:
        raise ValidationError("train_fraction must lie in (0, 1)")
    frac = Fraction(repr(float(train_fraction)))
    by_cond: dict[ConditionTag, list[int]] = {}
    for im in index.images:
        by_cond.setdefault(im.condition, []).append(im.id)
    train_ids: set[int] = set()
    for cond in sorted(by_cond):
        ids = sorted(by_cond[cond])
        n_train = math.floor(frac * len(ids))
        order = rng.stream(seed, "split", str(cond)).permutation(len(ids))
        train_ids.update(ids[k] for k in order[:n_train])
    test_ids = {im.id for im in index.images} - train_ids
    return SplitResult(index.subset(train_ids), index.subset(test_ids))


# ---------------------------------------------------------------------------
# Down-sampling
# ---------------------------------------------------------------------------


def scaled_size(width: int, height: int, scale_x: float, scale_y: float) -> tuple[int, int]:
    return max(1, round(width * scale_x)), max(1, round(height * scale_y))


def downsample_annotations(
    index: DatasetIndex,
    scale_x: float,
    scale_y: float,
    min_area: float = MIN_AREA,
) -> DatasetIndex:
    """Scale boxes and image sizes; boxes smaller than ``min_area`` after
    scaling are flagged ignore (area exactly ``min_area`` is kept)."""
    if not (0 < scale_x <= 1 and 0 < scale_y <= 1):
        raise ValidationError("scales must lie in (0, 1]")
    images = []
    for im in index.images:
        w, h = scaled_size(im.width, im.height, scale_x, scale_y)
        images.append(replace(im, width=w, height=h))
    anns = []
    for a in index.annotations:
        b = a.bbox
        nb = BBox(b.x * scale_x, b.y * scale_y, b.w * scale_x, b.h * scale_y)
        anns.append(replace(a, bbox=nb, ignore=a.ignore or nb.area() < min_area))
    return DatasetIndex(images, anns, index.categories)


def downsample_to(index: DatasetIndex, target_w: int, target_h: int, min_area: float = MIN_AREA) -> DatasetIndex:
    """Per-image variant of :func:`downsample_annotations` with a fixed target size."""
    out_images, out_anns = [], []
    by_image = index.annotations_by_image()
    for im in index.images:
        sx, sy = target_w / im.width, target_h / im.height
        sub = DatasetIndex([im], by_image[im.id], index.categories)
        d = downsample_annotations(sub, sx, sy, min_area)
        out_images.extend(replace(i, width=target_w, height=target_h) for i in d.images)
        out_anns.extend(d.annotations)
    return DatasetIndex(out_images, out_anns, index.categories)


# ---------------------------------------------------------------------------
# Slicing
# ---------------------------------------------------------------------------


def _axis_origins(length: int, tile: int, stride: int) -> list[int]:
    if length <= tile:
        return [0]
    out, x = [], 0
    while x + tile < length:
        out.append(x)
        x += stride
    out.append(length - tile)
    return out


def tile_grid(width: int, height: int, tile: int = TILE, overlap: int = OVERLAP) -> list[tuple[int, int]]:
    """Tile origins ``(x0, y0)`` in raster order (rows of y0, x0 increasing).

    Origins step by ``tile - overlap``; the last one on each axis is clamped
    to ``length - tile`` so every tile is full size. An axis shorter than the
    tile yields the single origin 0 and a clipped tile.
    """
    if not 0 <= overlap < tile:
        raise ValidationError("overlap must satisfy 0 <= overlap < tile")
    stride = tile - overlap
    xs = _axis_origins(width, tile, stride)
    ys = _axis_origins(height, tile, stride)
    return [(x0, y0) for y0 in ys for x0 in xs]


def _slice_image(im: ImageRecord, anns: list[Annotation], tile: int, overlap: int, keep_fraction: float):
    tw, th = min(tile, im.width), min(tile, im.height)
    out = []
    for x0, y0 in tile_grid(im.width, im.height, tile, overlap):
        kept = []
        for a in anns:
            b = a.bbox
            ix1, iy1 = max(b.x, x0), max(b.y, y0)
            ix2, iy2 = min(b.x2, x0 + tw), min(b.y2, y0 + th)
            if ix2 <= ix1 or iy2 <= iy1:
                continue
            inter = (ix2 - ix1) * (iy2 - iy1)
            # relative slack so an exact 40% boundary survives rounding
            if inter < keep_fraction * b.area() * (1 - 1e-12):
                continue
            kept.append((a, BBox(ix1 - x0, iy1 - y0, ix2 - ix1, iy2 - iy1)))
        out.append((x0, y0, tw, th, kept))
    return out


def slice_dataset(
    index: DatasetIndex,
    tile: int = TILE,
    overlap: int = OVERLAP,
    keep_fraction: float = KEEP_FRACTION,
    drop_empty: bool = True,
    threads: int = 1,
) -> DatasetIndex:
    """Cut every image into overlapping tiles with clipped annotations.

    A box survives in a tile when at least ``keep_fraction`` of its area is
    visible there. Tiles get fresh ids in (parent id, y0, x0) order and keep
    a ``provenance`` record of parent and origin.
    """
    by_image = index.annotations_by_image()
    images = sorted(index.images, key=lambda im: im.id)

    def work(im):
        return _slice_image(im, by_image[im.id], tile, overlap, keep_fraction)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        per_image = list(pool.map(work, images))

    out_images, out_anns = [], []
    for im, tiles in zip(images, per_image):
        stem = Path(im.file_path).stem
        suffix = Path(im.file_path).suffix or ".png"
        for x0, y0, tw, th, kept in tiles:
            if drop_empty and not kept:
                continue
            tile_id = len(out_images) + 1
            out_images.append(
                ImageRecord(
                    id=tile_id,
                    file_path=f"{stem}_{x0}_{y0}{suffix}",
                    width=tw,
                    height=th,
                    condition=im.condition,
                    provenance={"parent_image_id": im.id, "x0": x0, "y0": y0},
                )
            )
            for a, box in kept:
                out_anns.append(Annotation(len(out_anns) + 1, tile_id, a.category_id, box, a.ignore))
    return DatasetIndex(out_images, out_anns, index.categories)
