"""Orbital-optimized SPA reference data and GNN orbital prediction."""

__version__ = "0.1.0"

from .chem import Geometry, IntegralSet
from .errors import OospaError

__all__ = ["Geometry", "IntegralSet", "OospaError", "__version__"]
