"""Nehari-manifold and nonlinear Rayleigh quotient laboratory for a coupled
fractional concave-convex system on a periodic spectral grid."""
from .energy import Branch, ProblemParams, classify, energy, gradient
from .exceptions import (BranchFailureError, ConfigError, DegenerateInputError, DomainError,
                         NehariLabError, NoProjectionError, SamplerError)
from .extremal import (DirectionSampler, ExtremalEstimate, el_residual,
                       estimate_lambda_lower_star, estimate_lambda_star)
from .fibering import Exponents, FiberingCoefficients
from .fields import FieldPair, GridSpec, PotentialSpec, coefficients_of
from .solver import SolutionReport, SolveConfig, lambda_sweep, minimize_branch, project

__version__ = "0.1.0"

__all__ = [
    "Branch", "BranchFailureError", "ConfigError", "DegenerateInputError", "DirectionSampler",
    "DomainError", "Exponents", "ExtremalEstimate", "FiberingCoefficients", "FieldPair",
    "GridSpec", "NehariLabError", "NoProjectionError", "PotentialSpec", "ProblemParams",
    "SamplerError", "SolutionReport", "SolveConfig", "classify", "coefficients_of",
    "el_residual", "energy", "estimate_lambda_lower_star", "estimate_lambda_star", "gradient",
    "lambda_sweep", "minimize_branch", "project",
]
