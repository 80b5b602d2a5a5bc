"""Augmented Lagrangian / projected gradient solver for optimal control and MPC."""

from .augmented import Augmented, MultiplierState, transform_inequality
from .auglag import ALOptions, SolverSolution, solve
from .errors import ConfigError, InsufficientData, NumericalFailure
from .gradient import DecisionPoint, InnerOptions, LineSearchConfig, solve_inner
from .integrators import Grid, IntegratorChoice, integrate_adjoint, integrate_forward, quadrature
from .mpc import MovingHorizonEstimator, MpcController
from .options import SolverOptions
from .problem import Bounds, Problem, ProblemDims, check_derivatives, validate

__all__ = [
    "ALOptions", "Augmented", "Bounds", "ConfigError", "DecisionPoint", "Grid", "InnerOptions",
    "InsufficientData", "IntegratorChoice", "LineSearchConfig", "MovingHorizonEstimator", "MpcController",
    "MultiplierState", "NumericalFailure", "Problem", "ProblemDims", "SolverOptions", "SolverSolution",
    "check_derivatives", "integrate_adjoint", "integrate_forward", "quadrature", "solve", "solve_inner",
    "transform_inequality", "validate",
]
