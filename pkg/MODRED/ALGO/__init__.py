"""
Solvers: balanced sign optimization and the module reduction pipeline.
"""

__all__ = ["ModuleReduction", "SignOptimization"]
