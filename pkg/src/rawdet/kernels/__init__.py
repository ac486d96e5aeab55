"""Per-pixel kernels with two interchangeable backends.

The numba backend is used when numba imports cleanly; set
``RAWDET_DISABLE_NUMBA=1`` to force the pure-numpy path. Both backends take
and return plain ndarrays and validate nothing; callers in ``rawdet.isp``
and ``rawdet.unprocess`` own the contracts.
"""

import os
from types import ModuleType

from rawdet.kernels import _numpy
from rawdet.kernels._common import box_weights

_numba: ModuleType | None
try:
    from rawdet.kernels import _numba
except ImportError:  # pragma: no cover - numba missing
    _numba = None


def _disabled() -> bool:
    return os.environ.get("RAWDET_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}


def get_backend(name: str | None = None) -> ModuleType:
    """Return the kernel module ``"numba"`` or ``"numpy"`` (default: active)."""
    if name is None:
        name = "numpy" if (_disabled() or _numba is None) else "numba"
    if name == "numpy":
        return _numpy
    if name == "numba":
        if _numba is None:
            raise RuntimeError("numba backend requested but numba is not importable")
        return _numba
    raise ValueError(f"unknown kernel backend {name!r}")


_active = get_backend()
BACKEND = _active.NAME

mosaic = _active.mosaic
demosaic = _active.demosaic
add_noise = _active.add_noise
quantize = _active.quantize
box_downsample = _active.box_downsample

__all__ = [
    "BACKEND",
    "add_noise",
    "box_downsample",
    "box_weights",
    "demosaic",
    "get_backend",
    "mosaic",
    "quantize",
]
