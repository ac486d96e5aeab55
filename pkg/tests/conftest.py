import numpy as np
import pytest

from rawdet.core import (
    Annotation,
    BBox,
    Category,
    ConditionTag,
    DatasetIndex,
    ImageRecord,
    SRGBImage,
)

# Per-condition image counts of the reference dataset, in ConditionTag.all() order.
CONDITION_COUNTS = (477, 1210, 804, 1110, 1252, 244, 1842, 325, 521)


def reference_condition_index() -> DatasetIndex:
    images = []
    for tag, n in zip(ConditionTag.all(), CONDITION_COUNTS):
        for _ in range(n):
            i = len(images) + 1
            images.append(ImageRecord(i, f"{i:05d}.png", 6000, 4000, tag))
    return DatasetIndex(images, [], [Category(1, "car")])


def make_index(layout, width=1000, height=800, categories=("car", "person", "bike")):
    """layout: list of (condition string, [(category_id, x, y, w, h), ...])."""
    images, anns = [], []
    for i, (cond, boxes) in enumerate(layout, start=1):
        images.append(ImageRecord(i, f"im{i}.png", width, height, ConditionTag.parse(cond)))
        for cat, x, y, w, h in boxes:
            anns.append(Annotation(len(anns) + 1, i, cat, BBox(x, y, w, h)))
    cats = [Category(k + 1, name) for k, name in enumerate(categories)]
    return DatasetIndex(images, anns, cats)


def smooth_srgb(rng: np.random.Generator, size: int = 128, amp: float = 6.0) -> SRGBImage:
    """Low-frequency colour field: a flat base in [90, 160] plus three gentle cosines per channel."""
    yy, xx = np.mgrid[0:size, 0:size] / size
    out = np.empty((size, size, 3))
    for c in range(3):
        f = np.full_like(xx, rng.uniform(90, 160))
        for _ in range(3):
            kx, ky = rng.uniform(0.2, 1.0, 2)
            f += rng.uniform(-amp, amp) * np.cos(2 * np.pi * (kx * xx + ky * yy) + rng.uniform(0, 2 * np.pi))
        out[..., c] = f
    return SRGBImage(np.clip(np.rint(out), 0, 255).astype(np.uint8))


@pytest.fixture
def tiny_index():
    return make_index(
        [
            ("outdoor/daylight/clear", [(1, 10, 10, 50, 40), (2, 200, 100, 30, 60)]),
            ("outdoor/lowlight/rain", [(1, 300, 300, 200, 150)]),
            ("indoor/lowlight", [(2, 5, 5, 20, 20), (2, 600, 400, 100, 100), (3, 0, 0, 1000, 800)]),
        ]
    )


def random_eval_instance(g: np.random.Generator, max_images=5, max_cats=3, max_dets=10, size=800):
    """COCO-style doc plus detection dicts with integer boxes, shared scores
    (to exercise tie-breaking), random ignore flags and near-duplicate boxes."""
    tags = [str(t) for t in ConditionTag.all()]
    n_img = int(g.integers(1, max_images + 1))
    n_cat = int(g.integers(1, max_cats + 1))
    images = [
        {"id": i + 1, "file_name": f"{i}.png", "width": size, "height": size, "condition": tags[int(g.integers(9))]}
        for i in range(n_img)
    ]
    anns = []
    for _ in range(int(g.integers(0, 3 * n_img + 1))):
        w, h = int(g.integers(8, 480)), int(g.integers(8, 480))
        anns.append(
            {
                "id": len(anns) + 1,
                "image_id": int(g.integers(1, n_img + 1)),
                "category_id": int(g.integers(1, n_cat + 1)),
                "bbox": [int(g.integers(0, size - w)), int(g.integers(0, size - h)), w, h],
                "iscrowd": int(g.random() < 0.15),
            }
        )
    dets = []
    for _ in range(int(g.integers(0, max_dets + 1))):
        if anns and g.random() < 0.7:
            a = anns[int(g.integers(len(anns)))]
            x, y, w, h = a["bbox"]
            jitter = g.integers(-6, 7, 4)
            box = [x + int(jitter[0]), y + int(jitter[1]), max(1, w + int(jitter[2])), max(1, h + int(jitter[3]))]
            img, cat = a["image_id"], a["category_id"] if g.random() < 0.9 else int(g.integers(1, n_cat + 1))
        else:
            w, h = int(g.integers(4, 480)), int(g.integers(4, 480))
            box = [int(g.integers(0, size - w)), int(g.integers(0, size - h)), w, h]
            img, cat = int(g.integers(1, n_img + 1)), int(g.integers(1, n_cat + 1))
        dets.append({"image_id": img, "category_id": cat, "bbox": box, "score": float(g.integers(1, 11)) / 10})
    doc = {"images": images, "annotations": anns, "categories": [{"id": k + 1, "name": f"c{k}"} for k in range(n_cat)]}
    return doc, dets
