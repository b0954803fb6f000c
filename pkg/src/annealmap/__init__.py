"""Compile boolean CSPs into Chimera-structured Ising models and sample them."""
from .csp import Constraint, Csp, CspError, dumps_csp, example_csp, loads_csp
from .ising import HardwareGraph, IsingModel, ModelError, ParameterBounds, chimera_graph

__version__ = "0.1.0"

__all__ = [
    "Constraint",
    "Csp",
    "CspError",
    "HardwareGraph",
    "IsingModel",
    "ModelError",
    "ParameterBounds",
    "chimera_graph",
    "dumps_csp",
    "example_csp",
    "loads_csp",
]
