"""Spatial-wideband mmWave massive-MIMO channel simulation and gridless
quantized-ML channel estimation."""

from .kernels import BACKEND  # noqa: F401  (public: reports the active kernel backend)

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
