"""Synthesise 16-bit Bayer RAW from 8-bit sRGB.

The inverse pipeline, in application order::

    invert_tonemap -> srgb_to_linear -> inverse CCM -> safe inverse WB
        -> scale_to_brightness -> mosaic -> add_noise -> quantize

Brightness targets are expressed as the mean 16-bit sample value of the
output mosaic (maximum 2**16). Noise is Gaussian with variance
``lambda_read + lambda_shot * x`` on the normalised signal.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from rawdet import kernels, rng
from rawdet.core import (
    CFA,
    BayerImage,
    CameraProfile,
    LinearImage,
    NoiseParams,
    SRGBImage,
    ValidationError,
)
from rawdet.isp import apply_ccm

FULL_SCALE = 65536
SRGB_GAMMA = 2.2

# Noise-level mapping: lambda = level**2 * base.
BASE_SHOT = 1e-6
BASE_READ = 1e-10


def _check_unit_range(v, name: str) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64)
    if np.any(a < 0.0) or np.any(a > 1.0) or np.any(np.isnan(a)):
        raise ValueError(f"{name}: input outside [0, 1]")
    return a


def _like(v, out):
    return float(out) if np.ndim(v) == 0 else out


def srgb_to_linear(v, gamma: float = SRGB_GAMMA):
    """Gamma expansion ``v ** gamma`` for values in [0, 1]."""
    a = _check_unit_range(v, "srgb_to_linear")
    return _like(v, np.power(a, gamma))


def invert_tonemap(y):
    """Inverse of the smoothstep curve ``3x^2 - 2x^3`` on [0, 1]."""
    a = _check_unit_range(y, "invert_tonemap")
    return _like(y, 0.5 - np.sin(np.arcsin(1.0 - 2.0 * a) / 3.0))


def apply_inverse_ccm(pixel, ccm) -> np.ndarray:
    """Solve ``ccm @ out = pixel`` for RGB triples along the last axis."""
    m = np.asarray(ccm, dtype=np.float64)
    if m.shape != (3, 3) or abs(np.linalg.det(m)) <= 1e-8:
        raise ValidationError("ccm is singular or not 3x3")
    p = np.asarray(pixel, dtype=np.float64)
    return np.linalg.solve(m, p.reshape(-1, 3).T).T.reshape(p.shape)


def safe_invert_wb(pixel, gains, threshold: float = 0.9) -> np.ndarray:
    """Divide each channel by its white-balance gain without dimming highlights.

    For gains above 1 the effective gain falls linearly from ``g`` at
    ``threshold`` to 1 at full scale, so a saturated channel stays saturated.
    Negative inputs are clamped to zero first.
    """
    g = np.asarray(gains, dtype=np.float64)
    if g.shape != (3,) or np.any(g <= 0):
        raise ValidationError("gains must be three positive values")
    if not 0 < threshold <= 1:
        raise ValidationError("threshold must lie in (0, 1]")
    v = np.maximum(np.asarray(pixel, dtype=np.float64), 0.0)
    if threshold < 1:
        t = np.clip((v - threshold) / (1.0 - threshold), 0.0, 1.0)
        eff = np.where(g > 1.0, g + (1.0 - g) * t, g)
    else:
        eff = np.broadcast_to(g, v.shape)
    return v / eff


def scale_to_brightness(
    img: LinearImage,
    target_mean: float,
    full_scale: float = FULL_SCALE,
    cfa: CFA | str | None = None,
) -> tuple[LinearImage, float]:
    """Scale so the mean equals ``target_mean / full_scale``, then clip to [0, 1].

    With ``cfa`` the mean is taken over the samples that ``mosaic`` will
    keep, so the target is the mean brightness of the resulting RAW.
    """
    if not 0 < target_mean <= full_scale:
        raise ValidationError(f"target_mean must lie in (0, {full_scale}]")
    d = img.data
    if cfa is None:
        mean = float(d.mean())
    else:
        mean = float(kernels.mosaic(np.ascontiguousarray(d), CFA(cfa).channel_grid()).mean())
    if not mean > 0:
        raise ValidationError("cannot scale an all-zero image")
    s = (target_mean / full_scale) / mean
    return LinearImage(np.clip(d * s, 0.0, 1.0)), s


def mosaic_normalized(img: LinearImage, cfa: CFA | str = CFA.RGGB) -> np.ndarray:
    if img.height % 2 or img.width % 2:
        raise ValidationError(f"mosaic needs even dimensions, got {img.width}x{img.height}")
    return kernels.mosaic(np.ascontiguousarray(img.data), CFA(cfa).channel_grid())


def quantize(x: np.ndarray, black: int = 0, white: int = 65535) -> np.ndarray:
    """``round(black + x * (white - black))`` as uint16 (round half to even)."""
    return kernels.quantize(np.ascontiguousarray(x, dtype=np.float64), float(black), float(white))


def mosaic(img: LinearImage, cfa: CFA | str = CFA.RGGB, black: int = 0, white: int = 65535) -> BayerImage:
    """Keep one channel per pixel according to ``cfa`` and quantise to 16 bit."""
    x = mosaic_normalized(img, cfa)
    return BayerImage(quantize(x, black, white), CFA(cfa), black, white)


def add_noise(x: np.ndarray, p: NoiseParams, seed: int) -> np.ndarray:
    """``clip(x + N(0, lambda_read + lambda_shot * x), 0, 1)``.

    The standard normals come from the Philox stream ``(seed, "noise")`` in
    row-major order, so element ``i`` depends only on ``(seed, i)``.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    if p.lambda_shot == 0 and p.lambda_read == 0:
        return x.copy()
    z = rng.stream(seed, "noise").standard_normal(x.shape)
    return kernels.add_noise(x, z, float(p.lambda_shot), float(p.lambda_read))


def noise_params_for_level(level: float, base_shot: float = BASE_SHOT, base_read: float = BASE_READ) -> NoiseParams:
    """Map a unitless noise level to variances: ``lambda = level**2 * base``."""
    if level < 0:
        raise ValidationError("noise level must be non-negative")
    return NoiseParams(lambda_shot=level * level * base_shot, lambda_read=level * level * base_read)


# ---------------------------------------------------------------------------
# Profiles and augmentation sampling
# ---------------------------------------------------------------------------


def load_profile_bank(path: str | Path | None = None) -> list[CameraProfile]:
    """Read a JSON profile bank; ``None`` loads the four built-in profiles."""
    if path is None:
        text = resources.files("rawdet.data").joinpath("profiles.json").read_text()
    else:
        text = Path(path).read_text()
    data = json.loads(text)
    entries = data["profiles"] if isinstance(data, dict) else data
    return [CameraProfile.from_dict(e) for e in entries]


@dataclass(frozen=True)
class AugmentConfig:
    """Sampling ranges (inclusive); every draw is log-uniform."""

    brightness_range: tuple[float, float] = (80.0, 4096.0)
    noise_level_range: tuple[float, float] = (1.0, 10.0)
    red_gain_range: tuple[float, float] = (1.2, 2.4)
    blue_gain_range: tuple[float, float] = (1.2, 2.4)
    base_shot: float = BASE_SHOT
    base_read: float = BASE_READ

    def __post_init__(self):
        for name in ("brightness_range", "noise_level_range", "red_gain_range", "blue_gain_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ValidationError(f"{name} must satisfy 0 < lo <= hi, got ({lo}, {hi})")
        if self.brightness_range[1] > FULL_SCALE:
            raise ValidationError("brightness cannot exceed 2**16")


@dataclass(frozen=True)
class AugmentSample:
    target_brightness: float
    noise: NoiseParams
    wb_gains: tuple[float, float, float]
    ccm_index: int = 0
    noise_level: float | None = None

    def __post_init__(self):
        if not 0 < self.target_brightness <= FULL_SCALE:
            raise ValidationError("target_brightness must lie in (0, 65536]")
        if min(self.wb_gains) <= 0:
            raise ValidationError("wb gains must be positive")


def _log_uniform(g: np.random.Generator, lo: float, hi: float) -> float:
    u = g.random()
    if lo == hi:
        return float(lo)
    return float(min(hi, max(lo, math.exp(math.log(lo) + u * (math.log(hi) - math.log(lo))))))


def sample_augmentation(seed: int, config: AugmentConfig, bank: Sequence[CameraProfile]) -> AugmentSample:
    """Draw one brightness/noise/white-balance/CCM setting from ``(seed, "augment")``."""
    if not bank:
        raise ValidationError("profile bank is empty")
    g = rng.stream(seed, "augment")
    brightness = _log_uniform(g, *config.brightness_range)
    level = _log_uniform(g, *config.noise_level_range)
    red = _log_uniform(g, *config.red_gain_range)
    blue = _log_uniform(g, *config.blue_gain_range)
    idx = int(g.integers(len(bank)))
    return AugmentSample(
        target_brightness=brightness,
        noise=noise_params_for_level(level, config.base_shot, config.base_read),
        wb_gains=(red, 1.0, blue),
        ccm_index=idx,
        noise_level=level,
    )


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RawMetadata:
    """Sidecar describing how a synthetic RAW was produced."""

    cfa: CFA
    black_level: int
    white_level: int
    wb_gains: tuple[float, float, float]
    ccm: tuple[tuple[float, ...], ...]
    target_brightness: float
    noise: NoiseParams
    seed: int
    scale_factor: float
    gamma: float = SRGB_GAMMA
    safe_wb_threshold: float = 0.9
    extra: Mapping[str, object] = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "cfa": self.cfa.value,
            "black_level": self.black_level,
            "white_level": self.white_level,
            "wb_gains": list(self.wb_gains),
            "ccm": [list(r) for r in self.ccm],
            "target_brightness": self.target_brightness,
            "noise": {"lambda_shot": self.noise.lambda_shot, "lambda_read": self.noise.lambda_read},
            "seed": self.seed,
            "scale_factor": self.scale_factor,
            "gamma": self.gamma,
            "safe_wb_threshold": self.safe_wb_threshold,
        }
        d.update(self.extra)
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, object]) -> "RawMetadata":
        known = {
            "cfa", "black_level", "white_level", "wb_gains", "ccm", "target_brightness",
            "noise", "seed", "scale_factor", "gamma", "safe_wb_threshold",
        }
        noise = d.get("noise") or {}
        return cls(
            cfa=CFA(d.get("cfa", "RGGB")),
            black_level=int(d.get("black_level", 0)),
            white_level=int(d.get("white_level", 65535)),
            wb_gains=tuple(float(v) for v in d.get("wb_gains", (1.0, 1.0, 1.0))),
            ccm=tuple(tuple(float(v) for v in r) for r in d.get("ccm", np.eye(3).tolist())),
            target_brightness=float(d.get("target_brightness", 0.0)),
            noise=NoiseParams(float(noise.get("lambda_shot", 0.0)), float(noise.get("lambda_read", 0.0))),
            seed=int(d.get("seed", 0)),
            scale_factor=float(d.get("scale_factor", 1.0)),
            gamma=float(d.get("gamma", SRGB_GAMMA)),
            safe_wb_threshold=float(d.get("safe_wb_threshold", 0.9)),
            extra={k: v for k, v in d.items() if k not in known},
        )


def unprocess_with_metadata(
    img: SRGBImage,
    profile: CameraProfile,
    aug: AugmentSample,
    seed: int,
    cfa: CFA | str = CFA.RGGB,
) -> tuple[BayerImage, RawMetadata]:
    """Run the inverse ISP; ``aug.wb_gains`` override ``profile.wb_gains``."""
    cfa = CFA(cfa)
    if img.height % 2 or img.width % 2:
        raise ValidationError(f"unprocess needs even dimensions, got {img.width}x{img.height}")
    x = invert_tonemap(img.to_float())
    x = srgb_to_linear(x, profile.gamma)
    x = apply_inverse_ccm(x, profile.ccm)
    x = safe_invert_wb(x, aug.wb_gains, profile.safe_wb_threshold)
    scaled, s = scale_to_brightness(LinearImage(x), aug.target_brightness, cfa=cfa)
    raw = mosaic_normalized(scaled, cfa)
    raw = add_noise(raw, aug.noise, seed)
    samples = quantize(raw, profile.black_level, profile.white_level)
    meta = RawMetadata(
        cfa=cfa,
        black_level=profile.black_level,
        white_level=profile.white_level,
        wb_gains=tuple(aug.wb_gains),
        ccm=tuple(tuple(r) for r in profile.ccm.tolist()),
        target_brightness=aug.target_brightness,
        noise=aug.noise,
        seed=int(seed),
        scale_factor=s,
        gamma=profile.gamma,
        safe_wb_threshold=profile.safe_wb_threshold,
    )
    return BayerImage(samples, cfa, profile.black_level, profile.white_level), meta


def unprocess_image(
    img: SRGBImage,
    profile: CameraProfile,
    aug: AugmentSample,
    seed: int,
    cfa: CFA | str = CFA.RGGB,
) -> BayerImage:
    return unprocess_with_metadata(img, profile, aug, seed, cfa)[0]


def image_seed(seed: int, image_id: object) -> int:
    return rng.derive_seed(seed, "image", image_id)


def synthesize_sweep(
    dataset: Mapping[str, SRGBImage] | Iterable[tuple[str, SRGBImage]],
    brightness_list: Sequence[float],
    noise_list: Sequence[float],
    profile: CameraProfile,
    seed: int,
    *,
    base_shot: float = BASE_SHOT,
    base_read: float = BASE_READ,
    cfa: CFA | str = CFA.RGGB,
    threads: int = 1,
) -> dict[tuple[float, float], dict[str, tuple[BayerImage, RawMetadata]]]:
    """One synthetic RAW variant set per (brightness, noise level) pair.

    Images are keyed by a stable id; each image's noise seed is derived from
    ``(seed, id)`` alone, so results do not depend on input order or on
    ``threads``. Variant sets come back sorted by id.
    """
    if not brightness_list or not noise_list:
        raise ValidationError("brightness and noise lists must be non-empty")
    items = sorted(dataset.items() if isinstance(dataset, Mapping) else dataset, key=lambda kv: kv[0])
    ids = [k for k, _ in items]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate image id in sweep input")

    def run(args):
        (image_id, image), b, n = args
        aug = AugmentSample(
            target_brightness=float(b),
            noise=noise_params_for_level(n, base_shot, base_read),
            wb_gains=profile.wb_gains,
            noise_level=float(n),
        )
        bayer, meta = unprocess_with_metadata(image, profile, aug, image_seed(seed, image_id), cfa)
        meta = replace(meta, extra={"image_id": image_id, "noise_level": float(n)})
        return bayer, meta

    jobs = [(item, b, n) for b in brightness_list for n in noise_list for item in items]
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(run, jobs))
    out: dict[tuple[float, float], dict[str, tuple[BayerImage, RawMetadata]]] = {}
    for (item, b, n), res in zip(jobs, results):
        out.setdefault((float(b), float(n)), {})[item[0]] = res
    return out
