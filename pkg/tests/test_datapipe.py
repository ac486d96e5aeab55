import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rawdet.core import Annotation, BBox, Category, ConditionTag, DatasetIndex, ImageRecord, ValidationError
from rawdet.datapipe import (
    IndexParseError,
    downsample_annotations,
    downsample_to,
    load_index,
    save_index,
    slice_dataset,
    split_dataset,
    tile_grid,
)

from conftest import CONDITION_COUNTS, make_index, reference_condition_index
from oracles import reference_slice


def _doc(**over):
    doc = {
        "images": [{"id": 1, "file_name": "a.png", "width": 100, "height": 80, "condition": "outdoor/lowlight/rain"}],
        "annotations": [],
        "categories": [{"id": 1, "name": "car"}],
    }
    doc.update(over)
    return doc


class TestLoad:
    def test_minimal(self, tmp_path):
        p = tmp_path / "a.json"
        p.write_text(json.dumps(_doc()))
        idx = load_index(p)
        assert len(idx.images) == 1 and idx.images[0].condition == ConditionTag("outdoor", "lowlight", "rain")

    def test_dangling_image(self, tmp_path):
        p = tmp_path / "a.json"
        p.write_text(json.dumps(_doc(annotations=[{"id": 5, "image_id": 42, "category_id": 1, "bbox": [0, 0, 1, 1]}])))
        with pytest.raises(IndexParseError, match=r"annotations\[0\] \(id=5\): unknown image_id 42"):
            load_index(p)

    def test_nine_conditions(self, tmp_path):
        images = [
            {"id": i, "file_name": f"{i}.png", "width": 10, "height": 10, "condition": str(t)}
            for i, t in enumerate(ConditionTag.all())
        ]
        p = tmp_path / "a.json"
        p.write_text(json.dumps(_doc(images=images)))
        assert len({im.condition for im in load_index(p).images}) == 9

    @pytest.mark.parametrize(
        "doc, pattern",
        [
            ({"images": [], "annotations": []}, "missing key 'categories'"),
            (_doc(images=[{"id": 1, "file_name": "a", "width": 1, "height": 1, "condition": "indoor/daylight/fog"}]), "unknown condition"),
            (_doc(images=[{"id": 1, "file_name": "a", "width": "wide", "height": 1, "condition": "indoor/daylight"}]), "width must be an integer"),
            (_doc(images=[{"id": 1, "file_name": "a", "width": 0, "height": 1, "condition": "indoor/daylight"}]), "positive"),
            (_doc(annotations=[{"id": 1, "image_id": 1, "category_id": 9, "bbox": [0, 0, 1, 1]}]), "unknown category_id 9"),
            (_doc(annotations=[{"id": 1, "image_id": 1, "category_id": 1, "bbox": [0, 0, 1]}]), "bbox must be"),
            (_doc(annotations=[{"id": 1, "image_id": 1, "category_id": 1, "bbox": [0, 0, -1, 1]}]), "positive size"),
            (_doc(annotations=[{"id": None, "image_id": 1, "category_id": 1, "bbox": [0, 0, 1, 1]}]), r"annotations\[0\]: id must be"),
            (_doc(categories={"id": 1}), "categories must be a list"),
        ],
    )
    def test_structured_errors(self, tmp_path, doc, pattern):
        p = tmp_path / "bad.json"
        p.write_text(json.dumps(doc))
        with pytest.raises(IndexParseError, match=pattern):
            load_index(p)

    def test_bad_json_reports_position(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text('{\n  "images": [,]\n}')
        with pytest.raises(IndexParseError, match="line 2, column"):
            load_index(p)

    def test_parse_errors_are_validation_errors(self):
        assert issubclass(IndexParseError, ValidationError)


class TestSplit:
    def test_reference_counts(self):
        res = split_dataset(reference_condition_index(), 0.7, seed=0)
        assert (len(res.train.images), len(res.test.images)) == (5445, 2340)
        per = {}
        for im in res.train.images:
            per[im.condition] = per.get(im.condition, 0) + 1
        assert [per[t] for t in ConditionTag.all()] == [math.floor(7 * n / 10) for n in CONDITION_COUNTS]

    def test_ten_images(self):
        idx = make_index([("indoor/daylight", [])] * 10)
        res = split_dataset(idx, 0.7, 3)
        assert (len(res.train.images), len(res.test.images)) == (7, 3)

    def test_deterministic_and_seed_sensitive(self):
        idx = reference_condition_index()
        a = split_dataset(idx, 0.7, 1)
        b = split_dataset(idx, 0.7, 1)
        c = split_dataset(idx, 0.7, 2)
        assert a == b
        assert {im.id for im in a.train.images} != {im.id for im in c.train.images}

    def test_partition_and_annotations_follow(self, tiny_index):
        res = split_dataset(tiny_index, 0.5, 0)
        tr = {im.id for im in res.train.images}
        te = {im.id for im in res.test.images}
        assert not tr & te and tr | te == {im.id for im in tiny_index.images}
        assert all(a.image_id in tr for a in res.train.annotations)
        assert len(res.train.annotations) + len(res.test.annotations) == len(tiny_index.annotations)

    def test_bad_fraction(self, tiny_index):
        for f in (0.0, 1.0, 1.5):
            with pytest.raises(ValidationError):
                split_dataset(tiny_index, f)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.integers(0, 8), min_size=1, max_size=80), st.sampled_from([0.3, 0.5, 0.7, 0.8]), st.integers(0, 2**32))
    def test_floor_per_condition(self, picks, frac, seed):
        tags = ConditionTag.all()
        idx = DatasetIndex([ImageRecord(i, str(i), 1, 1, tags[k]) for i, k in enumerate(picks)])
        res = split_dataset(idx, frac, seed)
        for k in set(picks):
            n = picks.count(k)
            got = sum(1 for im in res.train.images if im.condition == tags[k])
            assert got == math.floor(round(frac * 10) * n / 10)


class TestDownsample:
    def _one(self, box, w=6000, h=4000):
        return make_index([("outdoor/daylight/clear", [(1, *box)])], width=w, height=h)

    def test_reference_box(self):
        out = downsample_to(self._one((300, 300, 90, 90)), 2000, 1333)
        b = out.annotations[0].bbox
        sy = 1333 / 4000
        assert (b.x, b.w) == pytest.approx((100, 30))
        assert (b.y, b.h) == pytest.approx((300 * sy, 90 * sy))
        assert b.h == pytest.approx(29.9925)
        assert out.annotations[0].ignore
        assert (out.images[0].width, out.images[0].height) == (2000, 1333)

    def test_unit_scale_identity(self, tiny_index):
        assert downsample_annotations(tiny_index, 1.0, 1.0, min_area=0) == tiny_index
        out = downsample_annotations(tiny_index, 1.0, 1.0)
        assert [a.bbox for a in out.annotations] == [a.bbox for a in tiny_index.annotations]
        # the tiny-object rule still applies at unit scale
        assert [a.ignore for a in out.annotations] == [a.bbox.area() < 1024 for a in tiny_index.annotations]

    def test_exact_boundary_kept(self):
        out = downsample_annotations(self._one((0, 0, 64, 64)), 0.5, 0.5)
        assert out.annotations[0].bbox.area() == 1024 and not out.annotations[0].ignore
        out = downsample_annotations(self._one((0, 0, 64, 62)), 0.5, 0.5)
        assert out.annotations[0].ignore

    def test_existing_ignore_preserved(self):
        idx = self._one((0, 0, 500, 500))
        idx = DatasetIndex(idx.images, [Annotation(1, 1, 1, BBox(0, 0, 500, 500), True)], idx.categories)
        assert downsample_annotations(idx, 0.5, 0.5).annotations[0].ignore

    def test_bad_scale(self, tiny_index):
        with pytest.raises(ValidationError):
            downsample_annotations(tiny_index, 1.5, 1.0)


class TestTileGrid:
    def test_reference_grid(self):
        g = tile_grid(6000, 4000, 1280, 300)
        xs = [0, 980, 1960, 2940, 3920, 4720]
        ys = [0, 980, 1960, 2720]
        assert g == [(x, y) for y in ys for x in xs]

    def test_exact_fit(self):
        assert tile_grid(1280, 1280) == [(0, 0)]

    def test_disjoint(self):
        assert tile_grid(2560, 1280, 1280, 0) == [(0, 0), (1280, 0)]

    def test_small_image(self):
        assert tile_grid(800, 600) == [(0, 0)]

    def test_bad_overlap(self):
        with pytest.raises(ValidationError):
            tile_grid(5000, 5000, 1280, 1280)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(1, 9000), st.integers(1, 9000), st.integers(16, 2000), st.data())
    def test_covers_every_pixel(self, w, h, tile, data):
        overlap = data.draw(st.integers(0, tile - 1))
        g = tile_grid(w, h, tile, overlap)
        for axis, n in ((0, w), (1, h)):
            origins = sorted({o[axis] for o in g})
            assert origins == sorted(set(origins))
            assert all(b > a for a, b in zip(origins, origins[1:]))
            size = min(tile, n)
            assert origins[0] == 0 and origins[-1] + size == n
            # consecutive tiles touch or overlap: no gap
            assert all(b <= a + size for a, b in zip(origins, origins[1:]))


class TestSlice:
    def test_contained_box_shifted(self):
        idx = make_index([("outdoor/daylight/clear", [(1, 1000, 1000, 100, 100)])], 6000, 4000)
        out = slice_dataset(idx)
        tiles = {(im.provenance["x0"], im.provenance["y0"]): im.id for im in out.images}
        by_tile = {a.image_id: a for a in out.annotations}
        b = by_tile[tiles[(980, 980)]].bbox
        assert (b.x, b.y, b.w, b.h) == (20, 20, 100, 100)

    def test_forty_percent_boundary(self):
        # tile (0, 0) spans x < 1280; 60 of 150 px visible is exactly 40%
        idx = make_index([("outdoor/daylight/clear", [(1, 1220, 100, 150, 50), (2, 1221, 400, 150, 50)])], 2560, 1280)
        out = slice_dataset(idx, 1280, 0, 0.4, drop_empty=False)
        first = [a for a in out.annotations if a.image_id == out.images[0].id]
        assert [a.category_id for a in first] == [1]
        assert first[0].bbox.w == 60

    def test_condition_and_provenance(self, tiny_index):
        out = slice_dataset(tiny_index, 512, 100, drop_empty=False)
        parents = {im.id: im for im in tiny_index.images}
        for im in out.images:
            p = parents[im.provenance["parent_image_id"]]
            assert im.condition == p.condition
            assert im.file_path.startswith(p.file_path.split(".")[0] + "_")

    def test_drop_empty(self):
        idx = make_index([("outdoor/daylight/clear", [(1, 10, 10, 50, 50)])], 6000, 4000)
        assert len(slice_dataset(idx).images) == 1
        assert len(slice_dataset(idx, drop_empty=False).images) == 24

    def test_matches_brute_force(self):
        g = np.random.default_rng(11)
        layout = []
        for _ in range(3):
            boxes = []
            for _ in range(40):
                w, h = int(g.integers(5, 900)), int(g.integers(5, 900))
                boxes.append((1, int(g.integers(0, 6000 - w)), int(g.integers(0, 4000 - h)), w, h))
            layout.append(("outdoor/lowlight/fog", boxes))
        idx = make_index(layout, 6000, 4000)
        out = slice_dataset(idx, drop_empty=False)
        by_tile = out.annotations_by_image()
        n_expected = 0
        for im in idx.images:
            boxes = [tuple(a.bbox.to_list()) for a in idx.annotations if a.image_id == im.id]
            ref = reference_slice(im.width, im.height, boxes, 1280, 300, 0.4)
            tiles = [t for t in out.images if t.provenance["parent_image_id"] == im.id]
            assert sorted((t.provenance["x0"], t.provenance["y0"]) for t in tiles) == sorted(ref)
            for t in tiles:
                got = sorted(tuple(a.bbox.to_list()) for a in by_tile[t.id])
                assert got == sorted(ref[(t.provenance["x0"], t.provenance["y0"])])
            n_expected += sum(len(v) for v in ref.values())
        assert len(out.annotations) == n_expected

    def test_boxes_inside_tiles_and_interior_count(self):
        g = np.random.default_rng(12)
        boxes = [(1, int(g.integers(0, 5000)), int(g.integers(0, 3000)), int(g.integers(5, 1000)), int(g.integers(5, 1000))) for _ in range(60)]
        idx = make_index([("outdoor/daylight/rain", boxes)], 6000, 4000)
        out = slice_dataset(idx)
        dims = {im.id: (im.width, im.height) for im in out.images}
        for a in out.annotations:
            w, h = dims[a.image_id]
            b = a.bbox
            assert 0 <= b.x and 0 <= b.y and b.x2 <= w and b.y2 <= h
        interior = 0
        origins = tile_grid(6000, 4000)
        for a in idx.annotations:
            b = a.bbox
            if any(x0 <= b.x and b.x2 <= x0 + 1280 and y0 <= b.y and b.y2 <= y0 + 1280 for x0, y0 in origins):
                interior += 1
        assert len(out.annotations) >= interior

    def test_thread_count_invariant(self, tiny_index):
        a = slice_dataset(tiny_index, 300, 50, threads=1)
        b = slice_dataset(tiny_index, 300, 50, threads=4)
        assert a == b

    def test_save_roundtrip(self, tiny_index, tmp_path):
        out = slice_dataset(tiny_index, 400, 100)
        save_index(out, tmp_path / "s.json")
        assert load_index(tmp_path / "s.json") == out
