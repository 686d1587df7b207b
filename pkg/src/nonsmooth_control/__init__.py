"""Finite-difference toolkit for a non-smooth semilinear elliptic control problem.

Solvers for the state, linearized and adjoint equations, a projected descent
optimizer, a mollified regularization path, and a-posteriori certificates of
first-order stationarity.
"""

from .beta import KinkKind, MollifiedBeta, MollifierPsi, PiecewiseLinearBeta, classify_kink, mollify, mollify_deriv
from .certificates import StationarityReport, certify, check_vi, detect_sets
from .grid import Grid2D, build_grid, integrate, measure
from .heaviside import h_eps, h_eps_prime
from .objective import ProblemParams, eval_objective, first_variation_density, optimize, solve_regularized_path
from .solvers import SolveReport, ZetaPolicy, ZetaRule, select_zeta, solve_adjoint, solve_linearized, solve_state
from .wspace import build_w_gram, project_F, riesz, w_inner

__version__ = "0.1.0"

__all__ = [
    "Grid2D", "build_grid", "integrate", "measure",
    "PiecewiseLinearBeta", "MollifierPsi", "MollifiedBeta", "KinkKind", "classify_kink", "mollify", "mollify_deriv",
    "h_eps", "h_eps_prime",
    "SolveReport", "ZetaPolicy", "ZetaRule", "solve_state", "solve_linearized", "select_zeta", "solve_adjoint",
    "build_w_gram", "w_inner", "riesz", "project_F",
    "ProblemParams", "eval_objective", "first_variation_density", "optimize", "solve_regularized_path",
    "StationarityReport", "certify", "check_vi", "detect_sets",
]
