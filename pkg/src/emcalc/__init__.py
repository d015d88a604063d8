"""Finite-state diagnostics for coarse-graining, path asymmetry, cycle
affinities, definability counts and discrete capacity bounds."""

__version__ = "0.1.0"
