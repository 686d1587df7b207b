"""The control space ``L2(D) ∩ H^s(D \\ closure(E))`` on the grid.

The ``H^s`` part is a dense Gram matrix over the nodes of ``D \\ closure(E)``:

* ``0 < s < 1``: discrete mass plus the Gagliardo double sum
  ``sum_{i != j} (u_i - u_j)**2 / |x_i - x_j|**(2 + 2 s) * h**4``;
* ``1 < s < 2``: discrete ``H^1`` norm plus the order ``s - 1`` Gagliardo
  seminorm of each forward difference quotient (edges with both endpoints in
  the region).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_factor, cho_solve

from .grid import Grid2D

__all__ = [
    "WGram",
    "build_w_gram",
    "w_inner",
    "w_norm",
    "w_apply",
    "riesz",
    "project_F",
    "gagliardo_gram",
    "MAX_DENSE_NODES",
]

MAX_DENSE_NODES = 100_000


def _pair_kernel(ij: np.ndarray, h: float, s: float) -> np.ndarray:
    """``|x_a - x_b|**-(2+2s)`` for integer node positions ``ij`` (zero diagonal)."""
    d2 = np.zeros((len(ij), len(ij)))
    for c in range(ij.shape[1]):
        diff = ij[:, c][:, None] - ij[:, c][None, :]
        d2 += diff.astype(float) ** 2
    np.fill_diagonal(d2, 1.0)
    K = (h * h * d2) ** (-(1.0 + s))
    np.fill_diagonal(K, 0.0)
    return K


def gagliardo_gram(ij: np.ndarray, h: float, s: float) -> np.ndarray:
    """Matrix ``G`` with ``u @ G @ u = sum_{a != b} (u_a - u_b)**2 K_ab h**4``."""
    K = _pair_kernel(np.asarray(ij), h, s)
    G = -K
    G[np.diag_indices_from(G)] = K.sum(axis=1)
    return 2.0 * h**4 * G


def _forward_difference(grid: Grid2D, ij_region: np.ndarray, axis: int):
    """Forward-difference matrix over region edges along ``axis`` and the edge positions."""
    index = {tuple(p): k for k, p in enumerate(map(tuple, ij_region))}
    rows, cols, vals, pos = [], [], [], []
    step = np.array([0, 1]) if axis == 0 else np.array([1, 0])
    for k, p in enumerate(ij_region):
        q = index.get(tuple(p + step))
        if q is None:
            continue
        r = len(pos)
        rows += [r, r]
        cols += [k, q]
        vals += [-1.0 / grid.h, 1.0 / grid.h]
        pos.append(p)
    D = sp.csr_matrix((vals, (rows, cols)), shape=(len(pos), len(ij_region)))
    return D, np.array(pos, dtype=int).reshape(-1, 2)


@dataclass(frozen=True, eq=False)
class WGram:
    """Inner product of the control space on a fixed grid.

    ``frac_gram`` is the full ``H^s`` Gram (mass included) on ``grid.mask_DE``
    nodes, in node order.
    """

    grid: Grid2D
    s: float
    frac_gram: np.ndarray = field(repr=False)
    _factor: tuple = field(repr=False, default=None)

    @property
    def mass_L2(self) -> np.ndarray:
        return np.full(self.grid.n, self.grid.h**2)

    @property
    def de_index(self) -> np.ndarray:
        return np.flatnonzero(self.grid.mask_DE)


def build_w_gram(grid: Grid2D, s: float) -> WGram:
    """Assemble the dense ``H^s`` Gram on ``D \\ closure(E)`` and factor the Riesz block."""
    s = float(s)
    if not (0.0 < s < 1.0 or 1.0 < s < 2.0):
        raise ValueError(f"s must lie in (0,1) or (1,2), got {s!r}")
    idx = np.flatnonzero(grid.mask_DE)
    m = idx.size
    if m > MAX_DENSE_NODES:
        raise ValueError(f"dense Gram too large: {m} nodes in D minus closure(E)")
    h = grid.h
    ij = np.column_stack(np.unravel_index(idx, grid.shape))
    gram = h * h * np.eye(m)
    if s < 1.0:
        gram += gagliardo_gram(ij, h, s)
    else:
        for axis in (0, 1):
            D, pos = _forward_difference(grid, ij, axis)
            DD = D.toarray()
            gram += h * h * (DD.T @ DD)
            if len(pos) > 1:
                gram += DD.T @ gagliardo_gram(pos, h, s - 1.0) @ DD
    gram = 0.5 * (gram + gram.T)
    factor = cho_factor(h * h * np.eye(m) + gram, lower=True)
    return WGram(grid, s, gram, factor)


def w_apply(gram: WGram, u: np.ndarray) -> np.ndarray:
    """Gram matrix times ``u``: ``w_inner(u, v) == v @ w_apply(gram, u)``."""
    u = np.asarray(u, dtype=float)
    out = gram.grid.h**2 * u
    idx = gram.de_index
    out[idx] += gram.frac_gram @ u[idx]
    return out


def w_inner(gram: WGram, u: np.ndarray, v: np.ndarray) -> float:
    return float(np.asarray(v, dtype=float) @ w_apply(gram, u))


def w_norm(gram: WGram, u: np.ndarray) -> float:
    return float(np.sqrt(max(w_inner(gram, u, u), 0.0)))


def riesz(gram: WGram, q: np.ndarray) -> np.ndarray:
    """Representer ``r`` with ``w_inner(r, v) = h**2 * q @ v`` for all ``v``."""
    q = np.asarray(q, dtype=float)
    r = q.copy()
    idx = gram.de_index
    r[idx] = cho_solve(gram._factor, gram.grid.h**2 * q[idx])
    return r


def project_F(g: np.ndarray, grid: Grid2D) -> np.ndarray:
    """Clamp to ``g <= 0`` on E; the L2 projection onto the feasible set."""
    out = np.array(g, dtype=float)
    out[grid.mask_E] = np.minimum(out[grid.mask_E], 0.0)
    return out
