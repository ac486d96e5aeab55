"""Minimal forward ISP: black/white-level normalisation, bilinear demosaic,
gamma, and box down-sampling.

``develop`` is the detector-facing pipeline. Given the sidecar metadata of a
synthetic RAW it additionally re-applies the recorded exposure, white
balance, colour matrix and tone curve, which makes it the inverse of
``rawdet.unprocess.unprocess_image``.
"""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np

from rawdet import kernels
from rawdet.core import CFA, BayerImage, LinearImage, ValidationError

if TYPE_CHECKING:
    from rawdet.unprocess import RawMetadata

DEFAULT_GAMMA = 2.2


def _pixels(img) -> np.ndarray:
    return img.data if isinstance(img, LinearImage) else np.asarray(img, dtype=np.float64)


def normalize(img: BayerImage) -> np.ndarray:
    """Map samples to [0, 1] using the image's black and white levels."""
    if img.white_level <= img.black_level:
        raise ValidationError("white_level must exceed black_level")
    s = img.samples.astype(np.float64)
    return np.clip((s - img.black_level) / (img.white_level - img.black_level), 0.0, 1.0)


def _check_even(h: int, w: int) -> None:
    if h % 2 or w % 2:
        raise ValidationError(f"CFA images need even dimensions, got {w}x{h}")


def demosaic(bayer_normalized: np.ndarray, cfa: CFA | str = CFA.RGGB) -> LinearImage:
    """Bilinear demosaic with mirrored (reflect-101) borders.

    Native sites keep their sample; green at red/blue sites is the mean of
    the four edge neighbours, the opposite chroma is the mean of the four
    diagonals, and chroma at green sites averages the two neighbours along
    the row or column that carries that colour.
    """
    x = np.ascontiguousarray(bayer_normalized, dtype=np.float64)
    if x.ndim != 2:
        raise ValidationError("demosaic expects a 2-D mosaic")
    _check_even(*x.shape)
    return LinearImage(kernels.demosaic(x, CFA(cfa).channel_grid()))


def gamma_correct(img, gamma: float = DEFAULT_GAMMA):
    """Encode linear light as ``x ** (1 / gamma)``.

    Accepts a :class:`LinearImage` (returned as one) or any array.
    """
    if not gamma > 0:
        raise ValidationError("gamma must be positive")
    d = _pixels(img)
    if np.any(d < 0):
        raise ValidationError("gamma_correct is undefined for negative input")
    out = d if gamma == 1 else np.power(d, 1.0 / gamma)
    return LinearImage(out) if isinstance(img, LinearImage) else out


def smoothstep(x):
    """Global tone curve ``3x^2 - 2x^3`` on [0, 1]."""
    x = np.asarray(x, dtype=np.float64)
    return 3.0 * x * x - 2.0 * x * x * x


def apply_ccm(pixels, ccm) -> np.ndarray:
    """Multiply RGB triples (last axis) by ``ccm``."""
    p = np.asarray(pixels, dtype=np.float64)
    return p @ np.asarray(ccm, dtype=np.float64).T


def develop(img: BayerImage, gamma: float = DEFAULT_GAMMA, meta: RawMetadata | None = None) -> LinearImage:
    """normalize -> demosaic -> gamma.

    With ``meta`` the recorded brightness scale is undone and white balance,
    CCM and the smoothstep tone curve are applied between demosaic and the
    final encode; ``meta.gamma`` then takes precedence over ``gamma``.
    """
    lin = demosaic(normalize(img), img.cfa).data
    if meta is None:
        return gamma_correct(LinearImage(lin), gamma)
    lin = lin / meta.scale_factor
    lin = lin * np.asarray(meta.wb_gains)
    lin = np.clip(apply_ccm(lin, meta.ccm), 0.0, 1.0)
    return LinearImage(smoothstep(gamma_correct(lin, meta.gamma)))


def downsample_image(img: LinearImage, target_w: int, target_h: int) -> LinearImage:
    """Area-averaging (box filter) resample to a smaller size."""
    h, w = img.height, img.width
    if not (0 < target_w <= w and 0 < target_h <= h):
        raise ValidationError(f"cannot downsample {w}x{h} to {target_w}x{target_h}")
    if (target_w, target_h) == (w, h):
        return img
    iy, wy = kernels.box_weights(h, target_h)
    ix, wx = kernels.box_weights(w, target_w)
    return LinearImage(kernels.box_downsample(np.ascontiguousarray(img.data), iy, wy, ix, wx))


def process_for_detector(
    img: BayerImage,
    gamma: float = DEFAULT_GAMMA,
    target: tuple[int, int] | None = None,
    order: str = "develop-first",
) -> LinearImage:
    """Detector input: develop and optionally down-sample to ``target`` (w, h).

    ``order="downsample-first"`` resamples the demosaiced linear image before
    the gamma encode instead of after it.
    """
    if order not in ("develop-first", "downsample-first"):
        raise ValueError(f"unknown order {order!r}")
    if target is None:
        return develop(img, gamma)
    if order == "develop-first":
        return downsample_image(develop(img, gamma), *target)
    lin = demosaic(normalize(img), img.cfa)
    return gamma_correct(downsample_image(lin, *target), gamma)
