"""
MODRED package initialization.

This package provides module lattice reduction over 2-power cyclotomic rings: exact ring
arithmetic, split-prime NTT rounding, K-linear Gram-Schmidt, log-unit short generators,
balanced sign optimization, the reduction pipeline, and experiment drivers.
"""

from .base import Config, Cyclotomic, LogUnits, ModuleGS, SplitNTT, utils
from .ALGO import ModuleReduction, SignOptimization
from .harness import Enumeration, Experiments, Sampling

__all__ = [
    "Config",
    "Cyclotomic",
    "LogUnits",
    "ModuleGS",
    "SplitNTT",
    "utils",
    "ModuleReduction",
    "SignOptimization",
    "Enumeration",
    "Experiments",
    "Sampling",
]
