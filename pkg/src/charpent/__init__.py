"""Cauchy problem lab for fourth-order hyperbolic operators in the plane."""

from .expr import parse
from .geometry import Gamma0, build_pentagon, determinacy_region
from .solver import CauchyData, ProblemInstance, cascade_solve, data_from_solution
from .symbol import build_symbol, coeffs_from_roots

__version__ = "0.1.0"

__all__ = [
    "parse",
    "Gamma0",
    "build_pentagon",
    "determinacy_region",
    "CauchyData",
    "ProblemInstance",
    "cascade_solve",
    "data_from_solution",
    "build_symbol",
    "coeffs_from_roots",
]
