"""Finite-element simulation of nanoparticle-mediated hyperthermia."""

from .config import parse_config
from .mesh import StructuredQuadMesh, build_mesh
from .sim import run_simulation, run_sweep

__all__ = ["StructuredQuadMesh", "build_mesh", "parse_config", "run_simulation", "run_sweep"]
__version__ = "0.1.0"
