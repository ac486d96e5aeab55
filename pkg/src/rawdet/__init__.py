"""RAW-domain object detection data toolkit."""

from rawdet.rng import ALGORITHM as RNG_ALGORITHM

__version__ = "0.1.0"

__all__ = ["RNG_ALGORITHM", "__version__"]
