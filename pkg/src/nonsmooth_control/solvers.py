"""State, linearized and adjoint solvers on a :class:`~nonsmooth_control.grid.Grid2D`.

All three equations share the operator ``-Δ_h + diag(H_eps(g) / eps)``; they
differ in the zeroth-order term.  Nonlinear ones are solved with a damped
semismooth Newton method whose generalized Jacobian uses the right slope of
beta (or the slope matching the sign of the unknown for the linearization).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .grid import Grid2D
from .heaviside import h_eps_field, h_eps_prime_field

__all__ = [
    "SolveReport",
    "SolverError",
    "ZetaRule",
    "ZetaPolicy",
    "solve_state",
    "solve_linearized",
    "select_zeta",
    "solve_adjoint",
    "state_residual",
    "linearized_residual",
    "adjoint_residual",
    "default_kink_tolerance",
]

ARMIJO_C = 1e-4
MIN_STEP = 2.0**-30


class SolverError(RuntimeError):
    """Raised when a linear solve cannot reach its residual tolerance."""


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    final_residual: float
    converged: bool
    damping_events: int

    def as_row(self) -> dict:
        return {
            "iterations": self.iterations,
            "final_residual": self.final_residual,
            "converged": int(self.converged),
            "damping_events": self.damping_events,
        }


def default_kink_tolerance(y: np.ndarray) -> float:
    return 1e-8 * (1.0 + float(np.max(np.abs(y), initial=0.0)))


def _base_operator(grid: Grid2D, eps: float, g: np.ndarray) -> tuple[sp.csr_matrix, np.ndarray]:
    H = h_eps_field(g, eps)
    return grid.laplacian, H / eps


def _newton(residual: Callable[[np.ndarray], np.ndarray],
            jacobian: Callable[[np.ndarray], sp.spmatrix],
            x0: np.ndarray, tol: float, max_iter: int) -> tuple[np.ndarray, SolveReport]:
    x = np.array(x0, dtype=float)
    r = residual(x)
    res = float(np.max(np.abs(r), initial=0.0))
    damping = 0
    it = 0
    while res > tol and it < max_iter:
        it += 1
        d = spsolve(jacobian(x).tocsc(), -r)
        phi = 0.5 * float(r @ r)
        t = 1.0
        while True:
            x_new = x + t * d
            r_new = residual(x_new)
            if 0.5 * float(r_new @ r_new) <= (1.0 - 2.0 * ARMIJO_C * t) * phi:
                break
            t *= 0.5
            if t < MIN_STEP:
                x_new = None
                break
        if x_new is None:
            break
        if t < 1.0:
            damping += 1
        x, r = x_new, r_new
        res = float(np.max(np.abs(r), initial=0.0))
    return x, SolveReport(it, res, bool(res <= tol), damping)


def state_residual(grid: Grid2D, beta, eps: float, g: np.ndarray, f: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``-Δ_h y + beta(y) + H_eps(g) y / eps - f - eps g``."""
    A, c = _base_operator(grid, eps, g)
    return A @ y + beta(y) + c * y - f - eps * np.asarray(g, dtype=float)


def solve_state(grid: Grid2D, beta, eps: float, g: np.ndarray, f: np.ndarray,
                tol: float = 1e-10, max_iter: int = 50,
                y0: Optional[np.ndarray] = None) -> tuple[np.ndarray, SolveReport]:
    """Solve the semilinear state equation; the report flags non-convergence."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    if not tol > 0:
        raise ValueError("tol must be positive")
    g = np.asarray(g, dtype=float)
    f = np.asarray(f, dtype=float)
    A, c = _base_operator(grid, eps, g)
    rhs = f + eps * g

    def residual(y):
        return A @ y + beta(y) + c * y - rhs

    def jacobian(y):
        return A + sp.diags(beta.right_slope(y) + c)

    return _newton(residual, jacobian, grid.zeros() if y0 is None else y0, tol, max_iter)


def _slopes_at(beta, y, kink_tol):
    return beta.one_sided(y, kink_tol)


def linearized_residual(grid: Grid2D, beta, eps: float, g: np.ndarray, y: np.ndarray,
                        h: np.ndarray, u: np.ndarray, kink_tol: Optional[float] = None) -> np.ndarray:
    """``-Δ_h u + beta'(y; u) + H u / eps + H' y h / eps - eps h``."""
    kink_tol = default_kink_tolerance(y) if kink_tol is None else kink_tol
    A, c = _base_operator(grid, eps, g)
    left, right = _slopes_at(beta, y, kink_tol)
    Hp = h_eps_prime_field(g, eps)
    bu = np.where(u >= 0, right, left) * u
    return A @ u + bu + c * u + (Hp / eps) * y * h - eps * h


def solve_linearized(grid: Grid2D, beta, eps: float, g: np.ndarray, y: np.ndarray, h: np.ndarray,
                     tol: float = 1e-10, max_iter: int = 50,
                     kink_tol: Optional[float] = None) -> tuple[np.ndarray, SolveReport]:
    """Directional derivative ``u = S'(g; h)`` given ``y = S(g)``.

    Nodes with ``y`` within ``kink_tol`` of a breakpoint use the one-sided
    slopes of that breakpoint, so ``beta'(y; u)`` is piecewise linear in ``u``.
    """
    g = np.asarray(g, dtype=float)
    y = np.asarray(y, dtype=float)
    h = np.asarray(h, dtype=float)
    kink_tol = default_kink_tolerance(y) if kink_tol is None else kink_tol
    A, c = _base_operator(grid, eps, g)
    left, right = _slopes_at(beta, y, kink_tol)
    src = eps * h - (h_eps_prime_field(g, eps) / eps) * y * h

    def residual(u):
        return A @ u + np.where(u >= 0, right, left) * u + c * u - src

    def jacobian(u):
        return A + sp.diags(np.where(u >= 0, right, left) + c)

    if np.array_equal(left, right):
        u = spsolve((A + sp.diags(right + c)).tocsc(), src)
        r = residual(u)
        res = float(np.max(np.abs(r), initial=0.0))
        if res <= tol:
            return u, SolveReport(1, res, True, 0)
        return _newton(residual, jacobian, u, tol, max_iter)
    return _newton(residual, jacobian, grid.zeros(), tol, max_iter)


class ZetaRule(enum.Enum):
    AT_LIMIT_OF_MOLLIFIED = "at_limit_of_mollified"
    MIDPOINT = "midpoint"
    LEFT_DERIVATIVE = "left_derivative"
    RIGHT_DERIVATIVE = "right_derivative"


@dataclass(frozen=True)
class ZetaPolicy:
    """How to pick the multiplier at nodes where the state sits on a kink.

    ``kink_tolerance=None`` means ``1e-8 * (1 + max|y|)``.
    """

    rule: ZetaRule = ZetaRule.MIDPOINT
    kink_tolerance: Optional[float] = None
    reference_gamma: float = 1e-6

    def tolerance_for(self, beta, y) -> float:
        tol = default_kink_tolerance(y) if self.kink_tolerance is None else float(self.kink_tolerance)
        if not tol > 0 or (beta.breakpoints and tol >= beta.delta / 4):
            raise ValueError(f"kink_tolerance {tol!r} outside (0, delta/4)")
        return tol


def select_zeta(beta, y: np.ndarray, policy: ZetaPolicy = ZetaPolicy()) -> np.ndarray:
    """Multiplier field: ``beta'(y)`` off kinks, the policy's choice on them."""
    y = np.asarray(y, dtype=float)
    tol = policy.tolerance_for(beta, y)
    k = beta.kink_index(y, tol)
    on = k >= 0
    zeta = np.asarray(beta.right_slope(y), dtype=float).copy()
    if not on.any():
        return zeta
    left, right = beta.one_sided(y[on], tol)
    rule = policy.rule
    if rule is ZetaRule.MIDPOINT:
        zeta[on] = 0.5 * (left + right)
    elif rule is ZetaRule.LEFT_DERIVATIVE:
        zeta[on] = left
    elif rule is ZetaRule.RIGHT_DERIVATIVE:
        zeta[on] = right
    else:
        from .beta import MollifiedBeta, default_psi
        val = MollifiedBeta(beta, default_psi(), policy.reference_gamma).slope(y[on])
        zeta[on] = np.clip(val, np.minimum(left, right), np.maximum(left, right))
    return zeta


def adjoint_operator(grid: Grid2D, eps: float, g: np.ndarray, zeta: np.ndarray) -> sp.csr_matrix:
    A, c = _base_operator(grid, eps, g)
    return (A + sp.diags(np.asarray(zeta, dtype=float) + c)).tocsr()


def adjoint_residual(grid: Grid2D, eps: float, g: np.ndarray, zeta: np.ndarray,
                     rhs: np.ndarray, p: np.ndarray) -> np.ndarray:
    return adjoint_operator(grid, eps, g, zeta) @ p - rhs


def solve_adjoint(grid: Grid2D, beta, eps: float, g: np.ndarray, zeta: np.ndarray, rhs: np.ndarray,
                  tol: float = 1e-10) -> np.ndarray:
    """Solve ``(-Δ_h + diag(zeta + H_eps(g)/eps)) p = rhs`` by sparse LU.

    ``tol`` bounds the sup-norm residual relative to ``max(1, max|rhs|)``; one
    step of iterative refinement is tried before giving up.  ``beta`` is
    accepted for signature symmetry and not used.
    """
    zeta = np.asarray(zeta, dtype=float)
    if np.any(zeta < 0):
        raise ValueError("zeta must be non-negative")
    rhs = np.asarray(rhs, dtype=float)
    K = adjoint_operator(grid, eps, g, zeta).tocsc()
    p = spsolve(K, rhs)
    scale = max(1.0, float(np.max(np.abs(rhs), initial=0.0)))
    r = K @ p - rhs
    if np.max(np.abs(r), initial=0.0) > tol * scale:
        p = p - spsolve(K, r)
        r = K @ p - rhs
    if not np.all(np.isfinite(p)) or np.max(np.abs(r), initial=0.0) > tol * scale:
        raise SolverError(f"adjoint residual {np.max(np.abs(r)):.3e} above {tol * scale:.3e}")
    return p
