"""Piecewise-linear monotone non-smoothness and its mollified family.

A :class:`PiecewiseLinearBeta` is written as

    beta(z) = c + m_0 z + sum_k (m_k - m_{k-1}) max(z - z_k, 0),

which makes both the value and the convolution with a bump closed-form up to
two one-dimensional integrals of the bump (its partial mass and partial first
moment).  Those are evaluated with a fixed Gauss-Legendre rule on ``[-1, a]``,
where the integrand is smooth.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

__all__ = [
    "KinkKind",
    "PiecewiseLinearBeta",
    "MollifierPsi",
    "MollifiedBeta",
    "beta_eval",
    "beta_dir_deriv",
    "classify_kink",
    "mollify",
    "mollify_deriv",
]


class KinkKind(enum.Enum):
    CONVEX = "convex"
    CONCAVE = "concave"


@dataclass(frozen=True)
class PiecewiseLinearBeta:
    """Continuous, non-decreasing, piecewise-linear function.

    Parameters
    ----------
    breakpoints : sequence of float
        Strictly increasing kink locations ``z_1 < ... < z_K``.
    slopes : sequence of float
        ``K + 1`` non-negative slopes; ``slopes[k]`` applies on ``(z_k, z_{k+1})``.
    value_at_zero : float
        ``beta(0)``.
    delta : float, optional
        Half-width of the neighbourhood around every kink.  The intervals
        ``[z - delta, z + delta]`` must be pairwise disjoint.  Defaults to a
        quarter of the smallest kink spacing (or 1 for a single kink).
    """

    breakpoints: tuple[float, ...]
    slopes: tuple[float, ...]
    value_at_zero: float = 0.0
    delta: float | None = None

    def __post_init__(self):
        z = tuple(float(v) for v in self.breakpoints)
        m = tuple(float(v) for v in self.slopes)
        object.__setattr__(self, "breakpoints", z)
        object.__setattr__(self, "slopes", m)
        object.__setattr__(self, "value_at_zero", float(self.value_at_zero))
        if len(m) != len(z) + 1:
            raise ValueError(f"need {len(z) + 1} slopes for {len(z)} breakpoints, got {len(m)}")
        if not all(np.isfinite(m)) or not all(np.isfinite(z)):
            raise ValueError("breakpoints and slopes must be finite")
        if any(s < 0 for s in m):
            raise ValueError("slopes must be non-negative (beta non-decreasing)")
        if any(b <= a for a, b in zip(z, z[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        if any(a == b for a, b in zip(m, m[1:])):
            raise ValueError("adjacent slopes must differ at every breakpoint")
        gaps = np.diff(z)
        if self.delta is None:
            delta = 0.25 * float(gaps.min()) if gaps.size else 1.0
        else:
            delta = float(self.delta)
        if not delta > 0:
            raise ValueError("delta must be positive")
        if gaps.size and np.any(gaps <= 2 * delta):
            raise ValueError(f"kink neighbourhoods of half-width {delta} overlap")
        object.__setattr__(self, "delta", delta)

    @classmethod
    def relu(cls) -> "PiecewiseLinearBeta":
        """``max(0, z)``: one convex kink at 0."""
        return cls((0.0,), (0.0, 1.0), 0.0)

    @classmethod
    def linear(cls, slope: float = 1.0, value_at_zero: float = 0.0) -> "PiecewiseLinearBeta":
        return cls((), (slope,), value_at_zero)

    @property
    def lipschitz(self) -> float:
        return max(self.slopes)

    @cached_property
    def _z(self) -> np.ndarray:
        return np.asarray(self.breakpoints, dtype=float)

    @cached_property
    def _m(self) -> np.ndarray:
        return np.asarray(self.slopes, dtype=float)

    @cached_property
    def _jumps(self) -> np.ndarray:
        return np.diff(self._m)

    @cached_property
    def _offset(self) -> float:
        return self.value_at_zero - float(np.sum(self._jumps * np.maximum(-self._z, 0.0)))

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        out = self._offset + self._m[0] * z
        if self._z.size:
            out = out + np.sum(self._jumps * np.maximum(z[..., None] - self._z, 0.0), axis=-1)
        return out

    def right_slope(self, z):
        return self._m[np.searchsorted(self._z, np.asarray(z, dtype=float), side="right")]

    def left_slope(self, z):
        return self._m[np.searchsorted(self._z, np.asarray(z, dtype=float), side="left")]

    def slope(self, z):
        """A.e. derivative; at a kink the right slope is returned."""
        return self.right_slope(z)

    def dir_deriv(self, z, d):
        d = np.asarray(d, dtype=float)
        return self.right_slope(z) * np.maximum(d, 0.0) + self.left_slope(z) * np.minimum(d, 0.0)

    def kink_index(self, z, tol: float) -> np.ndarray:
        """Index of the breakpoint within ``tol`` of each value, ``-1`` if none."""
        z = np.asarray(z, dtype=float)
        if not self._z.size:
            return np.full(z.shape, -1, dtype=int)
        k = np.abs(z[..., None] - self._z).argmin(axis=-1)
        near = np.abs(z - self._z[k]) <= tol
        return np.where(near, k, -1)

    def one_sided(self, z, tol: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
        """Left and right slopes, treating values within ``tol`` of a kink as on it."""
        z = np.asarray(z, dtype=float)
        if not self._z.size:
            s = np.full(z.shape, self._m[0])
            return s, s.copy()
        k = self.kink_index(z, tol)
        on = k >= 0
        left = np.where(on, self._m[np.maximum(k, 0)], self.left_slope(z))
        right = np.where(on, self._m[np.maximum(k, 0) + 1], self.right_slope(z))
        return left, right

    def kink_kind(self, k: int) -> KinkKind:
        return KinkKind.CONVEX if self._m[k + 1] > self._m[k] else KinkKind.CONCAVE

    @cached_property
    def convex_kinks(self) -> np.ndarray:
        return np.array([self.kink_kind(k) is KinkKind.CONVEX for k in range(len(self.breakpoints))], dtype=bool)

    def slope_hull(self, z, radius: float) -> tuple[np.ndarray, np.ndarray]:
        """Min and max slope of beta over ``[z - radius, z + radius]``."""
        z = np.asarray(z, dtype=float)
        lo = np.searchsorted(self._z, z - radius, side="left")
        hi = np.searchsorted(self._z, z + radius, side="right")
        smin = np.empty(z.shape)
        smax = np.empty(z.shape)
        for idx in np.ndindex(z.shape):
            seg = self._m[lo[idx]:hi[idx] + 1]
            smin[idx], smax[idx] = seg.min(), seg.max()
        return smin, smax


def beta_eval(beta: PiecewiseLinearBeta, z):
    return beta(z)


def beta_dir_deriv(beta: PiecewiseLinearBeta, z, d):
    """``beta'(z; d) = beta'_+(z) d^+ + beta'_-(z) d^-``."""
    return beta.dir_deriv(z, d)


def classify_kink(beta: PiecewiseLinearBeta, z: float) -> KinkKind:
    k = int(beta.kink_index(float(z), 1e-12 * (1.0 + abs(float(z)))))
    if k < 0:
        raise ValueError(f"smooth point: {z!r} is not a breakpoint")
    return beta.kink_kind(k)


def _bump(s: np.ndarray) -> np.ndarray:
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


@dataclass(frozen=True)
class MollifierPsi:
    """Normalized bump ``c * exp(-1 / (1 - s**2))`` on (-1, 1) with a Gauss-Legendre rule."""

    order: int = 64
    nodes: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)
    c_psi: float = field(init=False)

    def __post_init__(self):
        x, w = np.polynomial.legendre.leggauss(self.order)
        object.__setattr__(self, "nodes", x)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "c_psi", 1.0 / float(np.sum(w * _bump(x))))

    def density(self, s):
        return self.c_psi * _bump(np.asarray(s, dtype=float))

    def _partial(self, a, power: int) -> np.ndarray:
        a = np.clip(np.asarray(a, dtype=float), -1.0, 1.0)
        half = 0.5 * (a + 1.0)
        s = -1.0 + half[..., None] * (self.nodes + 1.0)
        vals = self.weights * self.density(s) * (s**power if power else 1.0)
        return half * np.sum(vals, axis=-1)

    def cdf(self, a):
        """``∫_{-1}^{a} psi(s) ds``."""
        a = np.asarray(a, dtype=float)
        out = self._partial(a, 0)
        return np.where(a >= 1.0, 1.0, np.where(a <= -1.0, 0.0, out))

    def partial_moment(self, a):
        """``∫_{-1}^{a} s psi(s) ds``; zero for ``a >= 1`` by evenness."""
        a = np.asarray(a, dtype=float)
        out = self._partial(a, 1)
        return np.where(np.abs(a) >= 1.0, 0.0, out)

    def abs_moment(self) -> float:
        return float(-2.0 * self.partial_moment(0.0))


@dataclass(frozen=True)
class MollifiedBeta:
    """``beta_gamma(v) = ∫ beta(v - gamma s) psi(s) ds`` for a piecewise-linear beta.

    Exposes the same evaluation interface as :class:`PiecewiseLinearBeta`, with
    no kinks (it is smooth).
    """

    beta: PiecewiseLinearBeta
    psi: MollifierPsi
    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma!r}")

    @property
    def breakpoints(self) -> tuple:
        return ()

    @property
    def lipschitz(self) -> float:
        return self.beta.lipschitz

    @property
    def delta(self) -> float:
        return self.beta.delta

    def _args(self, v):
        v = np.asarray(v, dtype=float)
        return v, (v[..., None] - self.beta._z) / self.gamma

    def __call__(self, v):
        v, a = self._args(v)
        b = self.beta
        out = b._offset + b._m[0] * v
        if b._z.size:
            ramp = (v[..., None] - b._z) * self.psi.cdf(a) - self.gamma * self.psi.partial_moment(a)
            out = out + np.sum(b._jumps * ramp, axis=-1)
        return out

    def slope(self, v):
        v, a = self._args(v)
        b = self.beta
        out = np.full(v.shape, b._m[0])
        if b._z.size:
            out = out + np.sum(b._jumps * self.psi.cdf(a), axis=-1)
        return out

    right_slope = slope
    left_slope = slope

    def dir_deriv(self, z, d):
        return self.slope(z) * np.asarray(d, dtype=float)

    def kink_index(self, z, tol: float) -> np.ndarray:
        return np.full(np.shape(z), -1, dtype=int)

    def one_sided(self, z, tol: float = 0.0):
        s = self.slope(z)
        return s, s

    convex_kinks = np.zeros(0, dtype=bool)


_DEFAULT_PSI = MollifierPsi()


def mollify(beta: PiecewiseLinearBeta, psi: MollifierPsi | None, gamma: float, v):
    return MollifiedBeta(beta, psi or _DEFAULT_PSI, gamma)(v)


def mollify_deriv(beta: PiecewiseLinearBeta, psi: MollifierPsi | None, gamma: float, v):
    return MollifiedBeta(beta, psi or _DEFAULT_PSI, gamma).slope(v)


def default_psi() -> MollifierPsi:
    return _DEFAULT_PSI


def as_beta(breakpoints: Sequence[float], slopes: Sequence[float], value_at_zero: float = 0.0,
            delta: float | None = None) -> PiecewiseLinearBeta:
    return PiecewiseLinearBeta(tuple(breakpoints), tuple(slopes), value_at_zero, delta)
