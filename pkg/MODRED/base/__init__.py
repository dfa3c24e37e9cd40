"""
Algebraic primitives: the cyclotomic ring, split-prime NTT, module Gram-Schmidt and log units.
"""

__all__ = ["Config", "Cyclotomic", "LogUnits", "ModuleGS", "SplitNTT", "utils"]
