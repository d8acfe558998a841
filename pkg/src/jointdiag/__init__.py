"""Approximate joint diagonalization by a relative quasi-Newton method."""

__version__ = "0.1.0"

from .core import (Diagonalizer, DomainError, SPDReport, SymmetricMatrixSet,
                   TransformedSet, transform_set, validate_spd)
from .criterion import (GammaMatrix, approx_hessian_apply,
                        approx_hessian_solve, full_hessian, gamma, loss,
                        loss_at, relative_gradient)
from .data import (GroundTruth, SynthConfig, covariances_from_segments,
                   gen_synthetic, whitener)
from .solver import (SolveResult, SolverConfig, SolverTrace,
                     backtracking_search, quadratic_rate_check, solve)

__all__ = [
    "Diagonalizer", "DomainError", "SPDReport", "SymmetricMatrixSet",
    "TransformedSet", "transform_set", "validate_spd", "GammaMatrix",
    "approx_hessian_apply", "approx_hessian_solve", "full_hessian", "gamma",
    "loss", "loss_at", "relative_gradient", "GroundTruth", "SynthConfig",
    "covariances_from_segments", "gen_synthetic", "whitener", "SolveResult",
    "SolverConfig", "SolverTrace", "backtracking_search",
    "quadratic_rate_check", "solve",
]
