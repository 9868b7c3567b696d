"""Synthetic PDE datasets: random fields, solvers and paired datasets."""

from .burgers import BurgersSolution, CFLError, solve_burgers
from .darcy import SolverError, solve_darcy
from .datasets import (SCENARIOS, DatasetFormatError, PairedDataset, ScenarioSpec, load_dataset, make_dataset,
                       save_dataset, scenario_specs)
from .elasticity import solve_elasticity
from .grf import sample_grf_matern, sample_grf_sqexp
from .grid import Grid, GridFunction

__all__ = [
    "BurgersSolution", "CFLError", "DatasetFormatError", "Grid", "GridFunction", "PairedDataset", "SCENARIOS",
    "ScenarioSpec", "SolverError", "load_dataset", "make_dataset", "sample_grf_matern", "sample_grf_sqexp",
    "save_dataset", "scenario_specs", "solve_burgers", "solve_darcy", "solve_elasticity",
]
