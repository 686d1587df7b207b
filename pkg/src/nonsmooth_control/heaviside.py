"""C^1 regularization of the Heaviside step on the interval (0, eps)."""

from __future__ import annotations

import numpy as np

__all__ = ["h_eps", "h_eps_prime", "h_eps_field", "h_eps_prime_field"]


def _check(eps: float) -> float:
    eps = float(eps)
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps!r}")
    return eps


def h_eps(v, eps: float):
    """``0`` for ``v <= 0``, ``v**2 (3 eps - 2 v) / eps**3`` on ``(0, eps)``, ``1`` for ``v >= eps``."""
    eps = _check(eps)
    v = np.asarray(v, dtype=float)
    mid = v * v * (3.0 * eps - 2.0 * v) / eps**3
    out = np.where(v <= 0.0, 0.0, np.where(v >= eps, 1.0, mid))
    return out if out.ndim else float(out)


def h_eps_prime(v, eps: float):
    """``6 v (eps - v) / eps**3`` on ``(0, eps)``, zero elsewhere."""
    eps = _check(eps)
    v = np.asarray(v, dtype=float)
    mid = 6.0 * v * (eps - v) / eps**3
    out = np.where((v > 0.0) & (v < eps), mid, 0.0)
    return out if out.ndim else float(out)


def h_eps_field(g: np.ndarray, eps: float) -> np.ndarray:
    return np.asarray(h_eps(np.asarray(g, dtype=float).ravel(), eps))


def h_eps_prime_field(g: np.ndarray, eps: float) -> np.ndarray:
    return np.asarray(h_eps_prime(np.asarray(g, dtype=float).ravel(), eps))
