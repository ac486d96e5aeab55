"""Domain types shared by every pipeline stage.

Images are numpy arrays wrapped in frozen dataclasses; the arrays are made
read-only on construction so instances can be shared between threads.
Dataset-level records (boxes, annotations, indices) are plain frozen
dataclasses with a COCO-style JSON mapping.
"""

from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np


class ValidationError(ValueError):
    """Raised when a value violates a domain invariant."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


# ---------------------------------------------------------------------------
# Images
# ---------------------------------------------------------------------------


class CFA(str, enum.Enum):
    RGGB = "RGGB"
    BGGR = "BGGR"
    GRBG = "GRBG"
    GBRG = "GBRG"

    def channel_grid(self) -> np.ndarray:
        """2x2 array of channel indices (0=R, 1=G, 2=B) for the tile origin."""
        lut = {"R": 0, "G": 1, "B": 2}
        s = self.value
        return np.array([[lut[s[0]], lut[s[1]]], [lut[s[2]], lut[s[3]]]], dtype=np.int64)


@dataclass(frozen=True)
class BayerImage:
    """Single-channel 16-bit CFA mosaic, ``samples`` shaped (height, width)."""

    samples: np.ndarray
    cfa: CFA = CFA.RGGB
    black_level: int = 0
    white_level: int = 65535

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim != 2:
            raise ValidationError(f"Bayer samples must be 2-D, got shape {s.shape}")
        if s.dtype != np.uint16:
            if s.size and (s.min() < 0 or s.max() > 65535):
                raise ValidationError("Bayer samples must lie in [0, 65535]")
            s = s.astype(np.uint16)
        if not 0 <= self.black_level < self.white_level <= 65535:
            raise ValidationError(
                f"need 0 <= black_level < white_level <= 65535, got "
                f"{self.black_level}, {self.white_level}"
            )
        object.__setattr__(self, "samples", _frozen(np.array(s, copy=True)))
        object.__setattr__(self, "cfa", CFA(self.cfa))

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    @property
    def width(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class LinearImage:
    """Linear-light RGB, float64 ``data`` shaped (height, width, 3)."""

    data: np.ndarray

    def __post_init__(self):
        d = np.array(self.data, dtype=np.float64, copy=True)
        if d.ndim != 3 or d.shape[2] != 3:
            raise ValidationError(f"LinearImage data must be (H, W, 3), got {d.shape}")
        if not np.all(np.isfinite(d)):
            raise ValidationError("LinearImage contains NaN or Inf")
        object.__setattr__(self, "data", _frozen(d))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class SRGBImage:
    """8-bit gamma-encoded RGB, ``data`` shaped (height, width, 3)."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.ndim != 3 or d.shape[2] != 3:
            raise ValidationError(f"SRGBImage data must be (H, W, 3), got {d.shape}")
        if d.dtype != np.uint8:
            if d.size and (d.min() < 0 or d.max() > 255):
                raise ValidationError("SRGBImage values must lie in [0, 255]")
            d = d.astype(np.uint8)
        object.__setattr__(self, "data", _frozen(np.array(d, copy=True)))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def to_float(self) -> np.ndarray:
        return self.data.astype(np.float64) / 255.0


# ---------------------------------------------------------------------------
# Camera model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CameraProfile:
    """Invertible ISP parameters.

    ``ccm`` maps white-balanced camera RGB to linear sRGB; its rows must sum
    to one so that white stays white.
    """

    ccm: np.ndarray = field(default_factory=lambda: np.eye(3))
    wb_gains: tuple[float, float, float] = (1.0, 1.0, 1.0)
    gamma: float = 2.2
    black_level: int = 0
    white_level: int = 65535
    safe_wb_threshold: float = 0.9
    name: str = ""

    def __post_init__(self):
        ccm = np.array(self.ccm, dtype=np.float64, copy=True)
        if ccm.shape != (3, 3):
            raise ValidationError(f"ccm must be 3x3, got {ccm.shape}")
        if abs(np.linalg.det(ccm)) <= 1e-8:
            raise ValidationError("ccm is singular")
        if np.any(np.abs(ccm.sum(axis=1) - 1.0) > 1e-6):
            raise ValidationError("ccm rows must sum to 1 (white-point preservation)")
        gains = tuple(float(g) for g in self.wb_gains)
        if len(gains) != 3 or min(gains) <= 0:
            raise ValidationError(f"wb_gains must be three positive values, got {gains}")
        if not self.gamma > 0:
            raise ValidationError("gamma must be positive")
        if not 0 <= self.black_level < self.white_level <= 65535:
            raise ValidationError("need 0 <= black_level < white_level <= 65535")
        if not 0 < self.safe_wb_threshold <= 1:
            raise ValidationError("safe_wb_threshold must lie in (0, 1]")
        object.__setattr__(self, "ccm", _frozen(ccm))
        object.__setattr__(self, "wb_gains", gains)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "ccm": self.ccm.tolist(),
            "wb_gains": list(self.wb_gains),
            "gamma": self.gamma,
            "black_level": self.black_level,
            "white_level": self.white_level,
            "safe_wb_threshold": self.safe_wb_threshold,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "CameraProfile":
        return cls(
            ccm=np.asarray(d["ccm"], dtype=np.float64),
            wb_gains=tuple(d.get("wb_gains", (1.0, 1.0, 1.0))),
            gamma=float(d.get("gamma", 2.2)),
            black_level=int(d.get("black_level", 0)),
            white_level=int(d.get("white_level", 65535)),
            safe_wb_threshold=float(d.get("safe_wb_threshold", 0.9)),
            name=str(d.get("name", "")),
        )


@dataclass(frozen=True)
class NoiseParams:
    """Heteroscedastic Gaussian noise: variance = lambda_read + lambda_shot * x."""

    lambda_shot: float = 0.0
    lambda_read: float = 0.0

    def __post_init__(self):
        if not (self.lambda_shot >= 0 and self.lambda_read >= 0):
            raise ValidationError("noise parameters must be non-negative")


# ---------------------------------------------------------------------------
# Dataset records
# ---------------------------------------------------------------------------


class Place(str, enum.Enum):
    INDOOR = "indoor"
    OUTDOOR = "outdoor"


class Light(str, enum.Enum):
    DAYLIGHT = "daylight"
    LOWLIGHT = "lowlight"


class Weather(str, enum.Enum):
    NONE = "none"
    CLEAR = "clear"
    FOG = "fog"
    RAIN = "rain"
    RAIN_FOG = "rain_fog"


_VALID_WEATHER = {
    (Place.INDOOR, Light.DAYLIGHT): (Weather.NONE,),
    (Place.INDOOR, Light.LOWLIGHT): (Weather.NONE,),
    (Place.OUTDOOR, Light.DAYLIGHT): (Weather.CLEAR, Weather.FOG, Weather.RAIN, Weather.RAIN_FOG),
    (Place.OUTDOOR, Light.LOWLIGHT): (Weather.CLEAR, Weather.FOG, Weather.RAIN),
}


@dataclass(frozen=True, order=True)
class ConditionTag:
    place: Place
    light: Light
    weather: Weather = Weather.NONE

    def __post_init__(self):
        try:
            place, light, weather = Place(self.place), Light(self.light), Weather(self.weather)
        except ValueError as e:
            raise ValidationError(str(e)) from None
        if weather not in _VALID_WEATHER[(place, light)]:
            raise ValidationError(
                f"no such capture condition: {place.value}/{light.value}/{weather.value}"
            )
        object.__setattr__(self, "place", place)
        object.__setattr__(self, "light", light)
        object.__setattr__(self, "weather", weather)

    @classmethod
    def parse(cls, s: str) -> "ConditionTag":
        parts = s.strip().lower().split("/")
        if len(parts) == 2:
            parts.append(Weather.NONE.value)
        if len(parts) != 3:
            raise ValidationError(f"malformed condition string {s!r}")
        return cls(*parts)

    def __str__(self) -> str:
        if self.weather is Weather.NONE:
            return f"{self.place.value}/{self.light.value}"
        return f"{self.place.value}/{self.light.value}/{self.weather.value}"

    @staticmethod
    def all() -> list["ConditionTag"]:
        """The nine capture conditions, in table order."""
        return [
            ConditionTag(place, light, weather)
            for (place, light), weathers in _VALID_WEATHER.items()
            for weather in weathers
        ]


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box, top-left corner plus size, in pixels."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValidationError(f"box must have positive size, got w={self.w}, h={self.h}")
        if not all(math.isfinite(v) for v in (self.x, self.y, self.w, self.h)):
            raise ValidationError("box coordinates must be finite")

    def area(self) -> float:
        return self.w * self.h

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    def to_list(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]


@dataclass(frozen=True)
class Annotation:
    id: int
    image_id: int
    category_id: int
    bbox: BBox
    ignore: bool = False


@dataclass(frozen=True)
class ImageRecord:
    id: int
    file_path: str
    width: int
    height: int
    condition: ConditionTag
    # set on tiles: {"parent_image_id", "x0", "y0"}
    provenance: Mapping[str, int] | None = None

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ValidationError(f"image {self.id}: width and height must be positive")


@dataclass(frozen=True)
class Category:
    id: int
    name: str


@dataclass(frozen=True)
class DatasetIndex:
    images: tuple[ImageRecord, ...] = ()
    annotations: tuple[Annotation, ...] = ()
    categories: tuple[Category, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "images", tuple(self.images))
        object.__setattr__(self, "annotations", tuple(self.annotations))
        object.__setattr__(self, "categories", tuple(self.categories))
        _check_unique((im.id for im in self.images), "image")
        _check_unique((a.id for a in self.annotations), "annotation")
        _check_unique((c.id for c in self.categories), "category")
        image_ids = {im.id for im in self.images}
        cat_ids = {c.id for c in self.categories}
        for a in self.annotations:
            if a.image_id not in image_ids:
                raise ValidationError(f"annotation {a.id} references unknown image_id {a.image_id}")
            if a.category_id not in cat_ids:
                raise ValidationError(
                    f"annotation {a.id} references unknown category_id {a.category_id}"
                )

    def annotations_by_image(self) -> dict[int, list[Annotation]]:
        out: dict[int, list[Annotation]] = {im.id: [] for im in self.images}
        for a in self.annotations:
            out[a.image_id].append(a)
        return out

    def subset(self, image_ids: Iterable[int]) -> "DatasetIndex":
        keep = set(image_ids)
        return DatasetIndex(
            images=[im for im in self.images if im.id in keep],
            annotations=[a for a in self.annotations if a.image_id in keep],
            categories=self.categories,
        )

    # COCO-style JSON mapping -------------------------------------------------

    def to_dict(self) -> dict:
        images = []
        for im in self.images:
            d = {
                "id": im.id,
                "file_name": im.file_path,
                "width": im.width,
                "height": im.height,
                "condition": str(im.condition),
            }
            if im.provenance is not None:
                d["provenance"] = dict(im.provenance)
            images.append(d)
        return {
            "images": images,
            "annotations": [
                {
                    "id": a.id,
                    "image_id": a.image_id,
                    "category_id": a.category_id,
                    "bbox": a.bbox.to_list(),
                    "area": a.bbox.area(),
                    "iscrowd": int(a.ignore),
                }
                for a in self.annotations
            ],
            "categories": [{"id": c.id, "name": c.name} for c in self.categories],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "DatasetIndex":
        """Strict inverse of :meth:`to_dict`; see ``datapipe.load_index`` for
        the user-facing loader with contextual error messages."""
        from rawdet.datapipe import parse_index

        return parse_index(d)


def _check_unique(ids: Iterable[int], what: str) -> None:
    seen = set()
    for i in ids:
        if i in seen:
            raise ValidationError(f"duplicate {what} id {i}")
        seen.add(i)


@dataclass(frozen=True)
class DetectionResult:
    image_id: int
    category_id: int
    bbox: BBox
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValidationError(f"detection score {self.score} outside [0, 1]")

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "category_id": self.category_id,
            "bbox": self.bbox.to_list(),
            "score": self.score,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "DetectionResult":
        return cls(
            image_id=int(d["image_id"]),
            category_id=int(d["category_id"]),
            bbox=BBox(*(float(v) for v in d["bbox"])),
            score=float(d["score"]),
        )


UNDEFINED = -1.0

_REPORT_KEYS = {
    "ap": "AP",
    "ap50": "AP50",
    "ap75": "AP75",
    "ap_s": "APs",
    "ap_m": "APm",
    "ap_l": "APl",
    "ap_normal": "APnormal",
    "ap_low": "APlow",
    "ap_rain": "APrain",
    "ap_fog": "APfog",
}


@dataclass(frozen=True)
class MetricsReport:
    """AP family; ``UNDEFINED`` (-1) marks slices without ground truth."""

    ap: float = UNDEFINED
    ap50: float = UNDEFINED
    ap75: float = UNDEFINED
    ap_s: float = UNDEFINED
    ap_m: float = UNDEFINED
    ap_l: float = UNDEFINED
    ap_normal: float = UNDEFINED
    ap_low: float = UNDEFINED
    ap_rain: float = UNDEFINED
    ap_fog: float = UNDEFINED

    def __post_init__(self):
        for k in _REPORT_KEYS:
            v = getattr(self, k)
            if not (v == UNDEFINED or 0.0 <= v <= 1.0):
                raise ValidationError(f"{k}={v} outside [0, 1] and not the -1 sentinel")

    def to_dict(self) -> dict[str, float]:
        return {name: getattr(self, k) for k, name in _REPORT_KEYS.items()}

    def values(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in _REPORT_KEYS}


def condition_count_table(index: DatasetIndex) -> dict[ConditionTag, int]:
    """Number of images per capture condition; all nine conditions present."""
    counts = Counter(im.condition for im in index.images)
    return {tag: counts.get(tag, 0) for tag in ConditionTag.all()}


def detections_from_json(data: Sequence[Mapping[str, Any]]) -> list[DetectionResult]:
    return [DetectionResult.from_dict(d) for d in data]
