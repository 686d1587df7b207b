"""Reduced objective, its first variation, projected descent and the mollified path."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .beta import MollifiedBeta, MollifierPsi, default_psi
from .grid import Grid2D, integrate
from .heaviside import h_eps_field, h_eps_prime_field
from .solvers import SolverError, ZetaPolicy, select_zeta, solve_adjoint, solve_state
from .wspace import WGram, build_w_gram, project_F, riesz, w_inner, w_norm

__all__ = [
    "ProblemParams",
    "Variation",
    "OptimizeResult",
    "PathPoint",
    "PathResult",
    "eval_objective",
    "first_variation_density",
    "w_gradient",
    "optimize",
    "solve_regularized_path",
    "default_gamma_schedule",
]


def _field(grid: Grid2D, v, name: str) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.ndim == 0:
        return np.full(grid.n, float(a))
    a = a.ravel()
    if a.size != grid.n:
        raise ValueError(f"{name} has {a.size} entries, grid has {grid.n} nodes")
    return a.copy()


@dataclass(frozen=True, eq=False)
class ProblemParams:
    """One instance of the control problem.

    ``prox_anchor``, when set, adds ``0.5 * ||g - prox_anchor||_W**2`` to the
    objective (used by the regularization path).  ``gram`` is built on demand.
    """

    grid: Grid2D
    beta: object
    eps: float
    alpha: float
    s: float
    f: np.ndarray
    y_d: np.ndarray
    g_sh: np.ndarray
    prox_anchor: Optional[np.ndarray] = None
    gram: Optional[WGram] = field(default=None, repr=False)
    state_tol: float = 1e-10
    max_newton: int = 50

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps!r}")
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be non-negative, got {self.alpha!r}")
        g = self.grid
        object.__setattr__(self, "f", _field(g, self.f, "f"))
        object.__setattr__(self, "y_d", _field(g, self.y_d, "y_d"))
        object.__setattr__(self, "g_sh", _field(g, self.g_sh, "g_sh"))
        if np.any(self.g_sh[g.mask_E] > 0):
            raise ValueError("g_sh must be feasible (<= 0 on E)")
        if self.prox_anchor is not None:
            object.__setattr__(self, "prox_anchor", _field(g, self.prox_anchor, "prox_anchor"))
        if self.gram is None or self.gram.grid is not g or self.gram.s != float(self.s):
            object.__setattr__(self, "gram", build_w_gram(g, self.s))

    def with_beta(self, beta, prox_anchor=None) -> "ProblemParams":
        return dataclasses.replace(self, beta=beta, prox_anchor=prox_anchor)


def _state(params: ProblemParams, g: np.ndarray) -> np.ndarray:
    y, rep = solve_state(params.grid, params.beta, params.eps, g, params.f,
                         tol=params.state_tol, max_iter=params.max_newton)
    if not rep.converged:
        raise SolverError(f"state solve did not converge: {rep}")
    return y


def eval_objective(params: ProblemParams, g: np.ndarray, y: Optional[np.ndarray] = None) -> float:
    """``∫_E (y - y_d)**2 + alpha ∫_D (1 - H_eps(g)) + ||g - g_sh||_W**2 / 2`` (+ proximal term)."""
    g = np.asarray(g, dtype=float)
    y = _state(params, g) if y is None else y
    grid = params.grid
    track = integrate(grid, (y - params.y_d) ** 2, "E")
    topo = params.alpha * integrate(grid, 1.0 - h_eps_field(g, params.eps), "D")
    dg = g - params.g_sh
    reg = 0.5 * w_inner(params.gram, dg, dg)
    if params.prox_anchor is not None:
        da = g - params.prox_anchor
        reg += 0.5 * w_inner(params.gram, da, da)
    return track + topo + reg


class Variation(NamedTuple):
    q: np.ndarray
    y: np.ndarray
    p: np.ndarray
    zeta: np.ndarray


def first_variation_density(params: ProblemParams, g: np.ndarray,
                            policy: ZetaPolicy = ZetaPolicy(),
                            y: Optional[np.ndarray] = None) -> Variation:
    """L2 density ``q`` of the derivative of the non-quadratic part of ``j``.

    ``q = p (eps - H'_eps(g) y / eps) - alpha H'_eps(g)`` with ``p`` the adjoint
    for the multiplier ``select_zeta(beta, y, policy)``.
    """
    g = np.asarray(g, dtype=float)
    grid, eps = params.grid, params.eps
    y = _state(params, g) if y is None else y
    zeta = select_zeta(params.beta, y, policy)
    rhs = 2.0 * np.where(grid.mask_E, y - params.y_d, 0.0)
    p = solve_adjoint(grid, params.beta, eps, g, zeta, rhs)
    Hp = h_eps_prime_field(g, eps)
    q = p * (eps - Hp * y / eps) - params.alpha * Hp
    return Variation(q, y, p, zeta)


def w_gradient(params: ProblemParams, g: np.ndarray, q: np.ndarray) -> np.ndarray:
    G = riesz(params.gram, q) + (g - params.g_sh)
    if params.prox_anchor is not None:
        G = G + (g - params.prox_anchor)
    return G


@dataclass
class OptimizeResult:
    g: np.ndarray
    j: float
    status: str
    trace: list = field(default_factory=list)
    vi_min: float = math.nan
    worst_direction: Optional[np.ndarray] = None
    certificate_calls: int = 0

    @property
    def certified(self) -> bool:
        return self.status == "certified"

    TRACE_HEADER = ("iter", "j", "step", "vi_min", "proxy")


def optimize(params: ProblemParams, g0: np.ndarray, step0: float = 1.0, max_iter: int = 200,
             cert_tol: float = 1e-6, n_samples: int = 1000, seed: int = 0,
             stat_tol: float = 1e-8) -> OptimizeResult:
    """Projected W-gradient descent with Armijo backtracking over the feasible set.

    The certificate :func:`~nonsmooth_control.certificates.check_vi` is the
    stopping test.  It runs at the start and whenever the projected-gradient
    proxy ``||g - P_F(g - G)||_W`` drops below ``stat_tol``; after a failed
    call the threshold is tightened tenfold.

    Returns
    -------
    OptimizeResult
        ``status`` is ``"certified"``, ``"max_iter"`` or ``"stalled"``.
    """
    from .certificates import check_vi

    grid = params.grid
    g = np.asarray(g0, dtype=float).copy()
    if np.any(g[grid.mask_E] > 0):
        raise ValueError("g0 must be feasible (<= 0 on E)")
    var = first_variation_density(params, g)
    j = eval_objective(params, g, var.y)
    res = OptimizeResult(g, j, "max_iter")
    threshold = stat_tol
    # unit W-curvature per quadratic term; the proximal term doubles it
    step = float(step0) / (1.0 if params.prox_anchor is None else 2.0)
    check_now = True
    for it in range(max_iter + 1):
        G = w_gradient(params, g, var.q)
        proxy = w_norm(params.gram, g - project_F(g - G, grid))
        vi = math.nan
        if check_now or proxy <= threshold:
            vi, worst = check_vi(params, g, n_samples=n_samples, seed=seed)
            res.certificate_calls += 1
            res.vi_min, res.worst_direction = vi, worst
            check_now = False
            if vi >= -cert_tol:
                res.trace.append((it, j, 0.0, vi, proxy))
                res.g, res.j, res.status = g, j, "certified"
                return res
            if proxy <= threshold:
                threshold *= 0.1
        if it == max_iter:
            res.trace.append((it, j, 0.0, vi, proxy))
            break
        sigma = step
        while True:
            g_new = project_F(g - sigma * G, grid)
            try:
                var_new = first_variation_density(params, g_new)
                j_new = eval_objective(params, g_new, var_new.y)
            except SolverError:
                j_new = math.inf
            if j_new <= j + 1e-4 * w_inner(params.gram, G, g_new - g) and j_new < j:
                break
            sigma *= 0.5
            if sigma < 1e-14:
                break
        res.trace.append((it, j, sigma if sigma >= 1e-14 else 0.0, vi, proxy))
        if sigma < 1e-14:
            res.g, res.j, res.status = g, j, "stalled"
            return res
        g, var, j = g_new, var_new, j_new
        res.g, res.j = g, j
    res.g, res.j, res.status = g, j, "max_iter"
    return res


@dataclass(frozen=True, eq=False)
class PathPoint:
    gamma: float
    g: np.ndarray
    y: np.ndarray
    p: np.ndarray
    zeta: np.ndarray
    j: float
    status: str = "certified"


@dataclass
class PathResult:
    points: list
    truncated: bool = False
    failed_gamma: Optional[float] = None

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)

    def __getitem__(self, k):
        return self.points[k]


def default_gamma_schedule(start: float = 1e-1, stop: float = 1e-4) -> list[float]:
    out, gamma = [], float(start)
    while gamma >= stop * (1 - 1e-12) or not out:
        out.append(gamma)
        gamma *= 0.5
    if out[-1] > stop * 1.5:
        out.append(gamma)
    return out


def solve_regularized_path(params: ProblemParams, gamma_schedule: Optional[Sequence[float]] = None,
                           g0: Optional[np.ndarray] = None, psi: Optional[MollifierPsi] = None,
                           **opt_kwargs) -> PathResult:
    """Solve the mollified problems along a decreasing ``gamma`` schedule.

    Leg ``k`` replaces beta by its mollification at ``gamma_k`` and adds the
    proximal term anchored at the solution of leg ``k - 1`` (``g0`` for the
    first leg).  A leg that does not certify ends the path.
    """
    gammas = list(default_gamma_schedule() if gamma_schedule is None else gamma_schedule)
    if any(gm <= 0 for gm in gammas) or any(b >= a for a, b in zip(gammas, gammas[1:])):
        raise ValueError("gamma schedule must be positive and strictly decreasing")
    psi = psi or default_psi()
    g = params.grid.zeros() if g0 is None else np.asarray(g0, dtype=float).copy()
    base = params.beta
    out = PathResult([])
    for gamma in gammas:
        mb = MollifiedBeta(base, psi, gamma)
        leg = params.with_beta(mb, prox_anchor=g)
        res = optimize(leg, g, **opt_kwargs)
        var = first_variation_density(leg, res.g)
        zeta = mb.slope(var.y)
        out.points.append(PathPoint(gamma, res.g, var.y, var.p, zeta, res.j, res.status))
        if not res.certified:
            out.truncated, out.failed_gamma = True, gamma
            break
        g = res.g
    return out
