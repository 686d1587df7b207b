"""Uniform finite-difference grid on a rectangle with a rectangular subdomain E.

Fields are 1-D float arrays of length ``nx * ny`` holding values at interior
nodes in row-major order (x2 index outer, x1 index inner).  Boundary values are
implicitly zero (homogeneous Dirichlet).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Union

import numpy as np
import scipy.sparse as sp
from scipy import ndimage

__all__ = [
    "Grid2D",
    "build_grid",
    "apply_laplacian",
    "integrate",
    "measure",
    "measure_band",
    "dilate_mask",
    "resolve_mask",
]

Rect = tuple[float, float, float, float]
MaskLike = Union[str, np.ndarray]

# relative tolerance used to decide whether a node sits on the boundary of E
_SNAP = 1e-10


@dataclass(frozen=True, eq=False)
class Grid2D:
    """Interior nodes of a uniform grid on ``domain_rect`` with masks for E.

    Rectangles are stored as ``(x1_min, x1_max, x2_min, x2_max)``.
    ``mask_E`` selects nodes strictly inside E; ``mask_DE`` is its complement,
    so nodes lying on the boundary of E are attributed to D minus closure(E).
    """

    nx: int
    ny: int
    h: float
    domain_rect: Rect
    e_rect: Rect
    mask_E: np.ndarray
    mask_DE: np.ndarray

    @property
    def n(self) -> int:
        return self.nx * self.ny

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        a1, _, a2, _ = self.domain_rect
        x1 = a1 + self.h * np.arange(1, self.nx + 1)
        x2 = a2 + self.h * np.arange(1, self.ny + 1)
        X1, X2 = np.meshgrid(x1, x2)
        return _frozen(X1.ravel()), _frozen(X2.ravel())

    @property
    def x1(self) -> np.ndarray:
        return self.coords[0]

    @property
    def x2(self) -> np.ndarray:
        return self.coords[1]

    @cached_property
    def laplacian(self) -> sp.csr_matrix:
        """Sparse matrix of the 5-point negative Laplacian with zero boundary values."""
        return _neg_laplacian(self.nx, self.ny, self.h)

    @cached_property
    def weights(self) -> np.ndarray:
        """Area attributed to each node for measure estimates.

        Dual cells of nodes next to the boundary are stretched to reach it, so
        the weights partition the whole rectangle.
        """
        w1 = np.full(self.nx, self.h)
        w1[[0, -1]] = 1.5 * self.h
        w2 = np.full(self.ny, self.h)
        w2[[0, -1]] = 1.5 * self.h
        return _frozen(np.outer(w2, w1).ravel())

    def to_2d(self, v: np.ndarray) -> np.ndarray:
        return np.asarray(v).reshape(self.shape)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.n)

    def full(self, value: float) -> np.ndarray:
        return np.full(self.n, float(value))


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def _neg_laplacian(nx: int, ny: int, h: float) -> sp.csr_matrix:
    def second_difference(m):
        return sp.diags([-np.ones(m - 1), 2.0 * np.ones(m), -np.ones(m - 1)], [-1, 0, 1])

    L = sp.kron(sp.identity(ny), second_difference(nx)) + sp.kron(second_difference(ny), sp.identity(nx))
    return (L / h**2).tocsr()


def build_grid(nx: int, ny: int, domain_rect: Rect = (0.0, 1.0, 0.0, 1.0),
               e_rect: Rect = (0.25, 0.75, 0.25, 0.75)) -> Grid2D:
    """Build the grid with ``nx * ny`` interior nodes and the masks of E.

    The mesh width is ``side / (n + 1)`` and must agree on both axes.

    Raises
    ------
    ValueError
        If counts are below 3, the aspect ratio gives different mesh widths,
        E is not strictly inside the domain, or E contains no node.
    """
    nx, ny = int(nx), int(ny)
    if nx < 3 or ny < 3:
        raise ValueError(f"need at least 3 interior nodes per axis, got {nx}x{ny}")
    a1, b1, a2, b2 = map(float, domain_rect)
    e1, f1, e2, f2 = map(float, e_rect)
    if not (a1 < b1 and a2 < b2):
        raise ValueError(f"degenerate domain rectangle {domain_rect}")
    h1 = (b1 - a1) / (nx + 1)
    h2 = (b2 - a2) / (ny + 1)
    if not np.isclose(h1, h2, rtol=1e-12, atol=0.0):
        raise ValueError(f"non-uniform mesh widths h1={h1!r}, h2={h2!r}; choose counts matching the aspect ratio")
    if not (e1 < f1 and e2 < f2):
        raise ValueError(f"degenerate subdomain rectangle {e_rect}")
    if not (a1 < e1 and f1 < b1 and a2 < e2 and f2 < b2):
        raise ValueError(f"E={e_rect} touches or leaves the boundary of D={domain_rect}; need d(closure(E), boundary) > 0")

    h = h1
    x1 = a1 + h * np.arange(1, nx + 1)
    x2 = a2 + h * np.arange(1, ny + 1)
    X1, X2 = (c.ravel() for c in np.meshgrid(x1, x2))
    tol = _SNAP * h
    inside = (X1 > e1 + tol) & (X1 < f1 - tol) & (X2 > e2 + tol) & (X2 < f2 - tol)
    if not inside.any():
        raise ValueError(f"E={e_rect} contains no interior node at h={h!r}")
    return Grid2D(nx, ny, h, (a1, b1, a2, b2), (e1, f1, e2, f2), _frozen(inside), _frozen(~inside))


def resolve_mask(grid: Grid2D, mask: MaskLike) -> np.ndarray:
    """Turn ``"D"``, ``"E"``, ``"DE"`` or a boolean array into a node mask."""
    if isinstance(mask, str):
        key = mask.upper().replace("\\", "").replace("-", "")
        if key == "D":
            return np.ones(grid.n, dtype=bool)
        if key == "E":
            return np.asarray(grid.mask_E)
        if key == "DE":
            return np.asarray(grid.mask_DE)
        raise ValueError(f"unknown region selector {mask!r}")
    m = np.asarray(mask, dtype=bool).ravel()
    if m.size != grid.n:
        raise ValueError(f"mask has {m.size} entries, grid has {grid.n} nodes")
    return m


def apply_laplacian(grid: Grid2D, v: np.ndarray) -> np.ndarray:
    """Return ``-Δ_h v``: ``(4 v_ij - sum of neighbours) / h**2`` with zero extension."""
    return grid.laplacian @ np.asarray(v, dtype=float)


def integrate(grid: Grid2D, v: np.ndarray, mask: MaskLike = "D") -> float:
    """Midpoint rule ``h**2 * sum(v)`` over the selected nodes."""
    m = resolve_mask(grid, mask)
    return float(grid.h**2 * np.sum(np.asarray(v, dtype=float)[m]))


def measure(grid: Grid2D, mask: MaskLike) -> float:
    """Lebesgue-measure estimate of the region covered by the selected nodes."""
    m = resolve_mask(grid, mask)
    return float(np.sum(grid.weights[m]))


def measure_band(grid: Grid2D, mask: MaskLike) -> float:
    """Uncertainty of :func:`measure`: estimated perimeter of the region times ``h``.

    The perimeter counts node faces shared with a node outside the mask, and
    faces on the domain boundary.
    """
    m2 = resolve_mask(grid, mask).reshape(grid.shape)
    if not m2.any():
        return 0.0
    padded = np.pad(m2, 1, constant_values=False)
    core = padded[1:-1, 1:-1]
    faces = 0
    for shifted in (padded[:-2, 1:-1], padded[2:, 1:-1], padded[1:-1, :-2], padded[1:-1, 2:]):
        faces += int(np.count_nonzero(core & ~shifted))
    return float(faces * grid.h * grid.h)


def dilate_mask(grid: Grid2D, mask: MaskLike, radius: float) -> np.ndarray:
    """All nodes within Euclidean distance ``radius`` of a node in ``mask``."""
    if radius < 0:
        raise ValueError("radius must be non-negative")
    m = resolve_mask(grid, mask).copy()
    r = radius / grid.h
    k = int(np.floor(r + 1e-9))
    if k == 0 or not m.any():
        return m
    off = np.arange(-k, k + 1)
    I, J = np.meshgrid(off, off, indexing="ij")
    footprint = I**2 + J**2 <= r * r * (1 + 1e-12)
    out = ndimage.binary_dilation(m.reshape(grid.shape), structure=footprint)
    return out.ravel()
