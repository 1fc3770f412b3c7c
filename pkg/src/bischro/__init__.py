"""Numerical laboratory for the fourth-order bi-Schrödinger curve flow on Kähler targets."""

from bischro.geometry import GrassmannProjector, SphereS2, make_backend
from bischro.flow import FlowParams, SolverConfig, params_from_energy

__version__ = "0.1.0"

__all__ = [
    "FlowParams",
    "GrassmannProjector",
    "SolverConfig",
    "SphereS2",
    "make_backend",
    "params_from_energy",
]
