"""Manifold nonlinear least squares with analytic Jacobians for common SLAM error terms."""

from .graph import Factor, Problem, VariableKind
from .lie import Pose, exp_se3, log_se3
from .solver import SolverOptions, solve

__all__ = ["Factor", "Problem", "VariableKind", "Pose", "exp_se3", "log_se3", "SolverOptions", "solve"]
__version__ = "0.1.0"
