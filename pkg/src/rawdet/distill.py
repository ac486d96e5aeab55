"""Cross-domain distillation losses: logit KL divergence and mean-L1 feature
matching, with analytic gradients and a finite-difference checker."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from rawdet import rng
from rawdet.core import ValidationError

EPS = 1e-12


def softmax(logits, temperature: float = 1.0) -> np.ndarray:
    """Numerically stable softmax of ``logits / temperature``."""
    if not temperature > 0:
        raise ValidationError("temperature must be positive")
    z = np.asarray(logits, dtype=np.float64) / temperature
    if not np.all(np.isfinite(z)):
        raise ValidationError("logits must be finite")
    e = np.exp(z - z.max())
    return e / e.sum()


def _prob(p) -> np.ndarray:
    return np.maximum(np.asarray(p, dtype=np.float64), EPS)


def _same_dim(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValidationError(f"dimension mismatch: {a.shape} vs {b.shape}")


def kl_logit_loss(y_s, y_t) -> float:
    """sum(y_t * log(y_t / y_s)) with both distributions clamped at 1e-12."""
    s, t = _prob(y_s), _prob(y_t)
    _same_dim(s, t)
    return float(np.sum(t * np.log(t / s)))


def kl_grad_wrt_student_logits(student_logits, y_t, temperature: float = 1.0) -> np.ndarray:
    """d KL(y_t || softmax(z / T)) / dz = (softmax(z / T) - y_t) / T."""
    y_s = softmax(student_logits, temperature)
    t = np.asarray(y_t, dtype=np.float64)
    _same_dim(y_s, t)
    return (y_s - t) / temperature


def feature_l1_loss(z_s, z_t) -> float:
    """Mean absolute difference over the C feature dimensions."""
    a, b = np.asarray(z_s, dtype=np.float64), np.asarray(z_t, dtype=np.float64)
    _same_dim(a, b)
    if a.size == 0:
        raise ValidationError("feature vectors must be non-empty")
    return float(np.abs(a - b).mean())


def feature_l1_subgradient(z_s, z_t) -> np.ndarray:
    a, b = np.asarray(z_s, dtype=np.float64), np.asarray(z_t, dtype=np.float64)
    _same_dim(a, b)
    return np.sign(a - b) / a.size


def combined_loss(ce: float, l_l: float, l_f: float, weights: tuple[float, float, float] = (1.0, 1.0, 1.0)) -> float:
    w_ce, w_l, w_f = weights
    return w_ce * ce + w_l * l_l + w_f * l_f


# ---------------------------------------------------------------------------
# Gradient verification
# ---------------------------------------------------------------------------


def central_difference(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        g.flat[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)
    return float(np.linalg.norm(a - b) / denom)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def run_gradient_checks(seed: int = 0, instances: int = 1000, kl_pairs: int = 100_000, tol: float = 1e-6) -> list[CheckResult]:
    """Randomised verification of every analytic gradient and of KL >= 0."""
    g = rng.stream(seed, "distill-check")
    results = []

    worst = 0.0
    for _ in range(instances):
        k = int(g.integers(2, 11))
        z = g.normal(0.0, 2.0, k)
        y_t = softmax(g.normal(0.0, 2.0, k))
        fd = central_difference(lambda v: kl_logit_loss(softmax(v), y_t), z)
        worst = max(worst, relative_error(kl_grad_wrt_student_logits(z, y_t), fd))
    results.append(CheckResult("kl_gradient", worst <= tol, f"max rel err {worst:.3e} over {instances} instances"))

    worst = 0.0
    h = 1e-5
    for _ in range(instances):
        c = int(g.integers(1, 65))
        zs = g.normal(0.0, 1.0, c)
        diff = g.uniform(0.01, 1.0, c) * g.choice([-1.0, 1.0], c)
        zt = zs - diff
        fd = central_difference(lambda v: feature_l1_loss(v, zt), zs, h)
        worst = max(worst, relative_error(feature_l1_subgradient(zs, zt), fd))
    results.append(CheckResult("l1_subgradient", worst <= tol, f"max rel err {worst:.3e} over {instances} instances"))

    k = 10
    a = g.normal(0.0, 3.0, (kl_pairs, k))
    b = g.normal(0.0, 3.0, (kl_pairs, k))
    violations = 0
    for i in range(kl_pairs):
        if kl_logit_loss(softmax(a[i]), softmax(b[i])) < 0:
            violations += 1
    results.append(CheckResult("kl_nonnegative", violations == 0, f"{violations} violations in {kl_pairs} pairs"))
    return results
