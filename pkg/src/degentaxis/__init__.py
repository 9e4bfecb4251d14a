"""Finite-volume simulator and diagnostics for a doubly degenerate nutrient-taxis system."""

__version__ = "0.1.0"

from .grid import Grid, GridError, integrate, make_grid
from .model import Params, RegimeError, State, regime_exponents
from .stepper import run, stable_dt, step
from .dualnorm import dual_norm, lattice_oracle, trajectory_variation
from .functionals import DiagnosticsConfig, DiagnosticsRecord
from .scenarios import InitialDataSpec, make_initial_data, stabilization_experiment, v0_sweep

__all__ = [
    "__version__",
    "Grid",
    "GridError",
    "integrate",
    "make_grid",
    "Params",
    "RegimeError",
    "State",
    "regime_exponents",
    "run",
    "stable_dt",
    "step",
    "dual_norm",
    "lattice_oracle",
    "trajectory_variation",
    "DiagnosticsConfig",
    "DiagnosticsRecord",
    "InitialDataSpec",
    "make_initial_data",
    "stabilization_experiment",
    "v0_sweep",
]
