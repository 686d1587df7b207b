"""A-posteriori stationarity checks for candidate controls.

Every check reports measures (node weights summed) together with a grid
uncertainty band rather than asserting exact zeros.  Nothing here raises on a
violation; violations are numbers in the report.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import NamedTuple, Optional

import numpy as np
from scipy.sparse import diags
from scipy.sparse.linalg import splu

from .grid import Grid2D, dilate_mask, measure, measure_band
from .heaviside import h_eps_field, h_eps_prime_field
from .objective import ProblemParams, first_variation_density
from .solvers import (
    SolverError,
    adjoint_residual,
    solve_linearized,
    solve_state,
)
from .wspace import project_F, w_apply

__all__ = [
    "ActiveSets",
    "StationarityReport",
    "detect_sets",
    "check_vi",
    "check_system",
    "check_signs",
    "check_cq_ha",
    "check_cq_cc",
    "check_data_condition",
    "check_equivalence",
    "certify",
    "VI_TOL",
]

VI_TOL = 1e-6
TOL_P = 1e-7
TOL_W = 1e-6
SYS_TOL = 1e-8


def default_tol_A(g) -> float:
    return 1e-8 * (1.0 + float(np.max(np.abs(g), initial=0.0)))


def default_tol_N(y) -> float:
    return 1e-8 * (1.0 + float(np.max(np.abs(y), initial=0.0)))


@dataclass(frozen=True, eq=False)
class ActiveSets:
    A: np.ndarray
    A_closure: np.ndarray
    Dn_convex: np.ndarray
    Dn_concave: np.ndarray


def detect_sets(params: ProblemParams, g: np.ndarray, y: np.ndarray,
                tol_A: Optional[float] = None, tol_N: Optional[float] = None) -> ActiveSets:
    """Active set in E, its one-ring closure, and the kink sets of the state."""
    grid = params.grid
    tol_A = default_tol_A(g) if tol_A is None else tol_A
    tol_N = default_tol_N(y) if tol_N is None else tol_N
    A = grid.mask_E & (np.abs(g) <= tol_A)
    A_cl = dilate_mask(grid, A, 1.5 * grid.h)
    k = params.beta.kink_index(y, tol_N)
    on = k >= 0
    convex = np.zeros(grid.n, dtype=bool)
    if on.any():
        convex[on] = np.asarray(params.beta.convex_kinks)[k[on]]
    return ActiveSets(A, A_cl, on & convex, on & ~convex)


# --------------------------------------------------------------------------- VI

def _direction_pool(grid: Grid2D, g: np.ndarray, n_samples: int, rng: np.random.Generator) -> list:
    """Feasible points ``h``; the first entry is ``g`` itself."""
    scale = max(1.0, float(np.max(np.abs(g), initial=0.0)))
    pool = [g, grid.zeros(), project_F(-g, grid), 2.0 * g, 0.5 * g]
    x1, x2 = grid.coords
    a1, b1, a2, b2 = grid.domain_rect
    n_bumps = max(0, (n_samples - len(pool)) // 3)
    e_idx = np.flatnonzero(grid.mask_E)
    for k in range(n_bumps):
        node = int(rng.integers(grid.n)) if k % 2 else int(e_idx[rng.integers(e_idx.size)])
        sign = -1.0 if k % 4 < 2 else 1.0
        h = g.copy()
        h[node] += sign * scale
        pool.append(project_F(h, grid))
    while len(pool) < n_samples:
        field = np.zeros(grid.n)
        for _ in range(3):
            c1 = rng.uniform(a1, b1)
            c2 = rng.uniform(a2, b2)
            w = rng.uniform(2 * grid.h, 0.3)
            field += rng.normal(0.0, scale) * np.exp(-((x1 - c1) ** 2 + (x2 - c2) ** 2) / (2 * w * w))
        pool.append(project_F(g + field, grid))
    return pool[:max(n_samples, 1)]


def check_vi(params: ProblemParams, g: np.ndarray, n_samples: int = 1000,
             seed: int = 0) -> tuple[float, np.ndarray]:
    """Smallest sampled value of the variational inequality at ``g``.

    For each feasible ``h`` the value is

        ( 2 chi_E (y - y_d), S'(g; h - g) ) - ( alpha H'_eps(g), h - g )
            + ( g - g_sh, h - g )_W,

    divided by ``1 + ||h - g||_W``.  Returns the minimum and ``h - g`` for the
    minimizer.  ``h = g`` is excluded unless it is the only sample.
    """
    grid, eps, beta = params.grid, params.eps, params.beta
    g = np.asarray(g, dtype=float)
    if np.any(g[grid.mask_E] > 0):
        raise ValueError("g must be feasible (<= 0 on E)")
    y, rep = solve_state(grid, beta, eps, g, params.f, tol=params.state_tol, max_iter=params.max_newton)
    if not rep.converged:
        raise SolverError(f"state solve did not converge: {rep}")
    track = 2.0 * grid.h**2 * np.where(grid.mask_E, y - params.y_d, 0.0)
    Hp = h_eps_prime_field(g, eps)
    topo = params.alpha * grid.h**2 * Hp
    anchor = g - params.g_sh
    if params.prox_anchor is not None:
        anchor = anchor + (g - params.prox_anchor)
    w_anchor = w_apply(params.gram, anchor)
    tol_N = default_tol_N(y)
    left, right = beta.one_sided(y, tol_N)
    smooth = np.array_equal(left, right)
    if smooth:
        K = grid.laplacian + diags(right + h_eps_field(g, eps) / eps)
        lu = splu(K.tocsc())
    rng = np.random.default_rng(seed)
    pool = _direction_pool(grid, g, n_samples, rng)
    best, worst = math.inf, np.zeros(grid.n)
    for k, h in enumerate(pool):
        if k == 0 and len(pool) > 1:
            continue
        d = h - g
        if smooth:
            u = lu.solve(eps * d - (Hp / eps) * y * d)
        else:
            u, lrep = solve_linearized(grid, beta, eps, g, y, d, kink_tol=tol_N)
            if not lrep.converged:
                raise SolverError(f"linearized solve did not converge: {lrep}")
        val = track @ u - topo @ d + w_anchor @ d
        norm = math.sqrt(max(float(d @ w_apply(params.gram, d)), 0.0))
        val /= 1.0 + norm
        if val < best:
            best, worst = float(val), d
    return best, worst


# ----------------------------------------------------------------------- system

class SystemCheck(NamedTuple):
    sys_residual: float
    zeta_violation: float
    kkt_interior_residual: float
    de_residual: float
    sp_violation: float


def _zeta_bounds(beta, y, tol_N):
    left, right = beta.one_sided(y, tol_N)
    return np.minimum(left, right), np.maximum(left, right), left, right


def check_system(params: ProblemParams, g: np.ndarray, y: np.ndarray, p: np.ndarray, zeta: np.ndarray,
                 sets: Optional[ActiveSets] = None, tol_p: float = TOL_P,
                 tol_N: Optional[float] = None) -> SystemCheck:
    """Residuals of the adjoint-multiplier system at ``(g, y, p, zeta)``."""
    grid, eps = params.grid, params.eps
    g, y, p, zeta = (np.asarray(v, dtype=float) for v in (g, y, p, zeta))
    tol_N = default_tol_N(y) if tol_N is None else tol_N
    sets = detect_sets(params, g, y, tol_N=tol_N) if sets is None else sets
    rhs = 2.0 * np.where(grid.mask_E, y - params.y_d, 0.0)
    sys_res = float(np.max(np.abs(adjoint_residual(grid, eps, g, zeta, rhs, p)), initial=0.0))
    lo, hi, _, _ = _zeta_bounds(params.beta, y, tol_N)
    slack = 1e-12 * (1.0 + np.abs(hi))
    bad_zeta = (zeta < lo - slack) | (zeta > hi + slack)
    Hp = h_eps_prime_field(g, eps)
    q = p * (eps - Hp * y / eps) - params.alpha * Hp
    anchor = g - params.g_sh
    if params.prox_anchor is not None:
        anchor = anchor + (g - params.prox_anchor)
    dens = q + w_apply(params.gram, anchor) / grid.h**2
    interior = grid.mask_E & ~sets.A
    kkt = float(np.max(np.abs(dens[interior]), initial=0.0))
    de = float(np.max(np.abs(dens[grid.mask_DE]), initial=0.0))
    sp_bad = sets.A & (eps * p > params.g_sh + tol_p)
    return SystemCheck(sys_res, measure(grid, bad_zeta), kkt, de, measure(grid, sp_bad))


class SignCheck(NamedTuple):
    convex: float
    concave: float
    active: float
    convex_full: float
    concave_full: float
    convex_band: float
    concave_band: float
    active_band: float


def check_signs(grid: Grid2D, p: np.ndarray, sets: ActiveSets, tol_p: float = TOL_P) -> SignCheck:
    """Measures where the adjoint has the wrong sign on the kink and active sets.

    The ``*_full`` entries use the whole kink sets and are only evaluated when
    the active set has measure at most ``h**2`` (``nan`` otherwise).
    """
    if not tol_p > 0:
        raise ValueError("tol_p must be positive")
    p = np.asarray(p, dtype=float)
    cvx = sets.Dn_convex & ~sets.A_closure
    ccv = sets.Dn_concave & ~sets.A_closure
    v_cvx = measure(grid, cvx & (p > tol_p))
    v_ccv = measure(grid, ccv & (p < -tol_p))
    v_act = measure(grid, sets.A & (p > tol_p))
    if measure(grid, sets.A) <= grid.h**2 * (1 + 1e-12):
        f_cvx = measure(grid, sets.Dn_convex & (p > tol_p))
        f_ccv = measure(grid, sets.Dn_concave & (p < -tol_p))
    else:
        f_cvx = f_ccv = math.nan
    return SignCheck(v_cvx, v_ccv, v_act, f_cvx, f_ccv,
                     measure_band(grid, cvx), measure_band(grid, ccv), measure_band(grid, sets.A))


class CQHa(NamedTuple):
    near_zero_measure: float
    integral: float
    excluded: int
    band: float


def check_cq_ha(params: ProblemParams, g: np.ndarray, y: np.ndarray, tol_w: float = TOL_W) -> CQHa:
    """Smallness set and inverse-square integral of ``w = H'_eps(g) y / eps - eps`` off E.

    ``band`` is the measure band of the region divided by ``eps**2``, the
    uncertainty of the integral for ``w`` close to ``-eps``.
    """
    if not tol_w > 0:
        raise ValueError("tol_w must be positive")
    grid, eps = params.grid, params.eps
    m = grid.mask_DE
    w = h_eps_prime_field(g, eps) * np.asarray(y, dtype=float) / eps - eps
    small = m & (np.abs(w) <= tol_w)
    keep = m & ~small
    integral = float(grid.h**2 * np.sum(1.0 / w[keep] ** 2))
    band = measure_band(grid, m) / eps**2
    return CQHa(measure(grid, small), integral, int(small.sum()), band)


def check_cq_cc(grid: Grid2D, sets: ActiveSets) -> tuple[float, float]:
    """Measure of convex kinks on the closure ring of A plus concave kinks on the closure, and its band."""
    bad = (sets.Dn_convex & sets.A_closure & ~sets.A) | (sets.Dn_concave & sets.A_closure)
    return measure(grid, bad), measure_band(grid, bad)


class DataCondition(NamedTuple):
    ok: bool
    ok_E: bool
    ok_DE: bool
    margin_E: float
    margin_DE: float
    state_max: float


def check_data_condition(params: ProblemParams, g: Optional[np.ndarray] = None) -> DataCondition:
    """``sup_E f <= beta(0)`` and ``sup_{D minus closure(E)} f < beta(0)``.

    When both hold and a feasible ``g`` is given, the state is solved and its
    largest nodal value reported (``nan`` otherwise).
    """
    grid = params.grid
    b0 = float(params.beta(0.0))
    margin_E = b0 - float(np.max(params.f[grid.mask_E]))
    margin_DE = b0 - float(np.max(params.f[grid.mask_DE], initial=-math.inf))
    ok_E, ok_DE = margin_E >= 0, margin_DE > 0
    state_max = math.nan
    if ok_E and ok_DE and g is not None:
        g = np.asarray(g, dtype=float)
        if np.all(g[grid.mask_E] <= 0) and np.all(np.isfinite(g)):
            y, _ = solve_state(grid, params.beta, params.eps, g, params.f,
                               tol=params.state_tol, max_iter=params.max_newton)
            state_max = float(np.max(y))
    return DataCondition(bool(ok_E and ok_DE), bool(ok_E), bool(ok_DE), margin_E, margin_DE, state_max)


class Equivalence(NamedTuple):
    ok: bool
    des_violation: float
    vi_min: float
    worst_direction: np.ndarray


def check_equivalence(params: ProblemParams, g: np.ndarray, y: np.ndarray, p: np.ndarray, zeta: np.ndarray,
                      n_samples: int = 1000, seed: int = 0, vi_tol: float = VI_TOL,
                      tol_N: Optional[float] = None) -> Equivalence:
    """Pointwise bracket ``zeta p in [beta'_+(y) p, beta'_-(y) p]`` plus sampled VI.

    The bracket is read as an ordered interval: it is empty (a violation) when
    ``beta'_+(y) p > beta'_-(y) p``.
    """
    grid = params.grid
    y, p, zeta = (np.asarray(v, dtype=float) for v in (y, p, zeta))
    tol_N = default_tol_N(y) if tol_N is None else tol_N
    _, _, left, right = _zeta_bounds(params.beta, y, tol_N)
    zp = zeta * p
    lo, hi = right * p, left * p
    slack = 1e-12 * (1.0 + np.abs(zp))
    bad = (zp < lo - slack) | (zp > hi + slack)
    des = measure(grid, bad)
    vi, worst = check_vi(params, g, n_samples=n_samples, seed=seed)
    return Equivalence(bool(des == 0.0 and vi >= -vi_tol), des, vi, worst)


# ----------------------------------------------------------------------- report

@dataclass
class StationarityReport:
    h: float
    seed: int
    n_samples: int
    vi_min: float
    sys_residual: float
    zeta_violation: float
    kkt_interior_residual: float
    de_residual: float
    sp_violation: float
    sign_violation_convex: float
    sign_violation_concave: float
    sign_violation_active: float
    sign_violation_convex_full: float
    sign_violation_concave_full: float
    sign_band_convex: float
    sign_band_concave: float
    sign_band_active: float
    cq_ha_near_zero_measure: float
    cq_ha_integral: float
    cq_ha_excluded: int
    cq_ha_band: float
    cq_cc_measure: float
    cq_cc_band: float
    data_condition_ok: bool
    data_margin_E: float
    data_margin_DE: float
    state_max: float
    measure_A: float
    measure_A_ring: float
    measure_Dn_convex: float
    measure_Dn_concave: float
    des_violation: float

    def signs_ok(self) -> bool:
        return (self.sign_violation_convex <= self.sign_band_convex
                and self.sign_violation_concave <= self.sign_band_concave
                and self.sign_violation_active <= self.sign_band_active)

    def passed(self, vi_tol: float = VI_TOL, sys_tol: float = SYS_TOL) -> bool:
        """System residual, signs, both constraint qualifications and the sampled VI."""
        return bool(
            self.vi_min >= -vi_tol
            and self.sys_residual <= sys_tol
            and self.zeta_violation == 0.0
            and self.signs_ok()
            and self.cq_ha_near_zero_measure <= self.cq_ha_band
            and math.isfinite(self.cq_ha_integral)
            and self.cq_cc_measure <= self.cq_cc_band
        )

    def items(self):
        return [(f.name, getattr(self, f.name)) for f in fields(self)]

    def to_text(self) -> str:
        lines = ["# stationarity report; nodal fields are canonical representatives"]
        lines += [f"{k} = {_fmt(v)}" for k, v in self.items()]
        lines.append(f"passed = {_fmt(self.passed())}")
        return "\n".join(lines) + "\n"

    def csv_header(self) -> str:
        return ",".join(k for k, _ in self.items())

    def csv_row(self) -> str:
        return ",".join(_fmt(v) for _, v in self.items())

    @classmethod
    def from_text(cls, text: str) -> "StationarityReport":
        vals = {}
        for line in text.splitlines():
            if not line.strip() or line.startswith("#"):
                continue
            k, _, v = line.partition("=")
            vals[k.strip()] = v.strip()
        kw = {}
        for f in fields(cls):
            raw = vals[f.name]
            if f.type in ("bool", bool):
                kw[f.name] = raw == "true"
            elif f.type in ("int", int):
                kw[f.name] = int(raw)
            else:
                kw[f.name] = float(raw)
        return cls(**kw)

    def as_dict(self) -> dict:
        return asdict(self)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".16e")


def certify(params: ProblemParams, g: np.ndarray, y: Optional[np.ndarray] = None,
            p: Optional[np.ndarray] = None, zeta: Optional[np.ndarray] = None,
            n_samples: int = 1000, seed: int = 0, tol_A: Optional[float] = None,
            tol_N: Optional[float] = None, tol_p: float = TOL_P, tol_w: float = TOL_W,
            return_worst: bool = False):
    """Run every check on a candidate and collect the numbers.

    Missing ``y``, ``p`` or ``zeta`` are computed from ``g`` with the default
    multiplier policy.  With ``return_worst`` the worst sampled VI direction is
    returned alongside the report.
    """
    grid = params.grid
    g = np.asarray(g, dtype=float)
    if y is None or p is None or zeta is None:
        var = first_variation_density(params, g)
        y = var.y if y is None else y
        p = var.p if p is None else p
        zeta = var.zeta if zeta is None else zeta
    tol_N = default_tol_N(y) if tol_N is None else tol_N
    sets = detect_sets(params, g, y, tol_A=tol_A, tol_N=tol_N)
    sysc = check_system(params, g, y, p, zeta, sets=sets, tol_p=tol_p, tol_N=tol_N)
    signs = check_signs(grid, p, sets, tol_p)
    cqha = check_cq_ha(params, g, y, tol_w)
    cqcc, cqcc_band = check_cq_cc(grid, sets)
    data = check_data_condition(params, g if np.all(g[grid.mask_E] <= 0) else None)
    eq = check_equivalence(params, g, y, p, zeta, n_samples=n_samples, seed=seed, tol_N=tol_N)
    report = StationarityReport(
        h=grid.h, seed=int(seed), n_samples=int(n_samples),
        vi_min=eq.vi_min,
        sys_residual=sysc.sys_residual,
        zeta_violation=sysc.zeta_violation,
        kkt_interior_residual=sysc.kkt_interior_residual,
        de_residual=sysc.de_residual,
        sp_violation=sysc.sp_violation,
        sign_violation_convex=signs.convex,
        sign_violation_concave=signs.concave,
        sign_violation_active=signs.active,
        sign_violation_convex_full=signs.convex_full,
        sign_violation_concave_full=signs.concave_full,
        sign_band_convex=signs.convex_band,
        sign_band_concave=signs.concave_band,
        sign_band_active=signs.active_band,
        cq_ha_near_zero_measure=cqha.near_zero_measure,
        cq_ha_integral=cqha.integral,
        cq_ha_excluded=cqha.excluded,
        cq_ha_band=cqha.band,
        cq_cc_measure=cqcc,
        cq_cc_band=cqcc_band,
        data_condition_ok=data.ok,
        data_margin_E=data.margin_E,
        data_margin_DE=data.margin_DE,
        state_max=data.state_max,
        measure_A=measure(grid, sets.A),
        measure_A_ring=measure(grid, sets.A_closure & ~sets.A),
        measure_Dn_convex=measure(grid, sets.Dn_convex),
        measure_Dn_concave=measure(grid, sets.Dn_concave),
        des_violation=eq.des_violation,
    )
    return (report, eq.worst_direction) if return_worst else report
