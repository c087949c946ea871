"""theta-weighted SAV / projection solvers for multi-component conservative
Allen-Cahn flow (Navier-Stokes and Darcy) on periodic 2D grids."""

from .coupler import Level, ModelParams, Simulation, bootstrap, initial_level, modified_energy, step, total_mass
from .spectral import Grid, create_grid

__all__ = [
    "Grid",
    "Level",
    "ModelParams",
    "Simulation",
    "bootstrap",
    "create_grid",
    "initial_level",
    "modified_energy",
    "step",
    "total_mass",
]

__version__ = "0.1.0"
