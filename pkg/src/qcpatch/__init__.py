"""Patchwork constructions and extensions of multivariate quasi-copulas on grids."""

from .grid import GridFunction, Mesh, NBox, corner_point, evaluate, pointwise_max, pointwise_min, resample

__version__ = "0.1.0"

__all__ = [
    "GridFunction",
    "Mesh",
    "NBox",
    "corner_point",
    "evaluate",
    "pointwise_max",
    "pointwise_min",
    "resample",
]
