"""Two-phase PCD and LSC block preconditioners for the lid-driven cavity."""
from .driver import CavityProblem, SolveReport, run_cavity, run_single_timestep
from .grid import build_discretization, build_grid, lid_values

__all__ = ["CavityProblem", "SolveReport", "run_cavity", "run_single_timestep",
           "build_grid", "build_discretization", "lid_values"]
