"""Simulation and verification lab for stochastic balance laws.

``du + div f(u) dt = sigma(x, u) dW + eps Lap u dt`` on a periodic box,
solved by a monotone finite-volume scheme with Euler-Maruyama noise, plus
Monte Carlo estimators for BV decay, time continuity, L1 contraction,
continuous dependence, the vanishing-viscosity rate and fractional BV.
"""

from .model import (Field, FluxModel, Grid, InitialData, ModelError, NoiseModel, Problem,
                    WeightFunction, validate_problem)
from .noise import BrownianPath, PathError, refine_path, sample_path, uniform_path
from .solver import BlowUpError, SolverConfig, Trajectory, cfl_dt, numerical_flux, solve, step

__version__ = "0.1.0"

__all__ = [
    "BlowUpError", "BrownianPath", "Field", "FluxModel", "Grid", "InitialData", "ModelError",
    "NoiseModel", "PathError", "Problem", "SolverConfig", "Trajectory", "WeightFunction",
    "cfl_dt", "numerical_flux", "refine_path", "sample_path", "solve", "step", "uniform_path",
    "validate_problem",
]
