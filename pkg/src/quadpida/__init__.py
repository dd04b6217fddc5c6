"""Quadcopter flight simulation with filtered-PIDA control, stochastic
dual-simplex gain tuning, and genetic-filter state estimation."""

from .params import QuadParams
from .pida import PidaGains, default_gains

__version__ = "0.1.0"

__all__ = ["QuadParams", "PidaGains", "default_gains", "__version__"]
