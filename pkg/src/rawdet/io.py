"""Image files: 16-bit Bayer PNG + JSON sidecar, 8/16-bit RGB PNG, and a
raw float32 tensor format.

Tensor layout (little-endian)::

    8 bytes   magic b"RAWDTNS\\x01"
    3 x u32   channels, height, width
    float32   payload in channel-major (C, H, W) order
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import cv2
import numpy as np

from rawdet.core import BayerImage, LinearImage, SRGBImage, ValidationError
from rawdet.unprocess import RawMetadata

TENSOR_MAGIC = b"RAWDTNS\x01"
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")


def _write(path: Path, arr: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    ok, buf = cv2.imencode(".png", arr)
    if not ok:
        raise OSError(f"PNG encoding failed for {path}")
    path.write_bytes(buf.tobytes())


def read_srgb(path: str | Path) -> SRGBImage:
    arr = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if arr is None:
        raise ValidationError(f"cannot read image {path}")
    return SRGBImage(cv2.cvtColor(arr, cv2.COLOR_BGR2RGB))


def write_srgb(img: SRGBImage, path: str | Path) -> None:
    _write(Path(path), cv2.cvtColor(np.ascontiguousarray(img.data), cv2.COLOR_RGB2BGR))


def sidecar_path(png: str | Path) -> Path:
    return Path(png).with_suffix(".json")


def write_bayer(img: BayerImage, meta: RawMetadata, path: str | Path) -> None:
    """Single-channel 16-bit PNG plus ``<stem>.json`` sidecar."""
    path = Path(path)
    _write(path, np.ascontiguousarray(img.samples))
    sidecar_path(path).write_text(json.dumps(meta.to_dict(), indent=1, sort_keys=True) + "\n")


def read_bayer(path: str | Path) -> tuple[BayerImage, RawMetadata]:
    path = Path(path)
    arr = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if arr is None or arr.ndim != 2 or arr.dtype != np.uint16:
        raise ValidationError(f"{path}: expected a single-channel 16-bit PNG")
    side = sidecar_path(path)
    if not side.exists():
        raise ValidationError(f"{path}: missing sidecar {side.name}")
    meta = RawMetadata.from_dict(json.loads(side.read_text()))
    return BayerImage(arr, meta.cfa, meta.black_level, meta.white_level), meta


def write_rgb16(img: LinearImage, path: str | Path) -> None:
    q = np.rint(np.clip(img.data, 0.0, 1.0) * 65535.0).astype(np.uint16)
    _write(Path(path), cv2.cvtColor(q, cv2.COLOR_RGB2BGR))


def write_tensor(img: LinearImage, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    chw = np.ascontiguousarray(img.data.transpose(2, 0, 1), dtype="<f4")
    c, h, w = chw.shape
    path.write_bytes(TENSOR_MAGIC + struct.pack("<3I", c, h, w) + chw.tobytes())


def read_tensor(path: str | Path) -> np.ndarray:
    """Return the (C, H, W) float32 payload."""
    raw = Path(path).read_bytes()
    if raw[:8] != TENSOR_MAGIC:
        raise ValidationError(f"{path}: bad tensor magic")
    c, h, w = struct.unpack("<3I", raw[8:20])
    data = np.frombuffer(raw, dtype="<f4", offset=20)
    if data.size != c * h * w:
        raise ValidationError(f"{path}: payload size does not match header")
    return data.reshape(c, h, w)


def list_images(directory: str | Path) -> list[Path]:
    root = Path(directory)
    return sorted(p for p in root.rglob("*") if p.suffix.lower() in IMAGE_SUFFIXES and p.is_file())
