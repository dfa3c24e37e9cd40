"""
Experiment drivers: seeded samplers, the enumeration oracle and the table reproductions.
"""

__all__ = ["Enumeration", "Experiments", "Sampling"]
