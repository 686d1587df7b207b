"""INI run configurations and the field-expression grammar.

Example::

    [grid]
    nx = 31
    ny = 31
    e_rect = 0.25, 0.75, 0.25, 0.75

    [problem]
    eps = 0.1
    alpha = 1
    s = 0.5
    f = -1
    y_d = -0.1
    g_sh = 0

    [beta]
    breakpoints = 0
    slopes = 0, 1
    value_at_zero = 0

Field values are numbers, expressions in ``x1``, ``x2``, ``pi``, ``eps`` with
``+ - * / **`` and ``sin cos exp min max``, or ``file:PATH`` for a grid dump.
"""

from __future__ import annotations

import ast
import configparser
import math
import operator
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .beta import PiecewiseLinearBeta
from .fieldio import load_field
from .grid import Grid2D, build_grid

__all__ = ["ConfigError", "RunConfig", "parse_config", "load_config", "eval_expression"]


class ConfigError(ValueError):
    """Invalid configuration; ``line`` is 1-based or ``None``."""

    def __init__(self, message: str, line: Optional[int] = None, source: str = "<config>"):
        self.line = line
        self.source = source
        where = f"{source}:{line}" if line else source
        super().__init__(f"{where}: {message}")


_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "min": np.minimum, "max": np.maximum}


def eval_expression(expr: str, x1: np.ndarray, x2: np.ndarray, eps: float = math.nan) -> np.ndarray:
    """Evaluate a restricted arithmetic expression on node coordinates."""
    names = {"x1": x1, "x2": x2, "pi": math.pi, "eps": eps}

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id not in names:
                raise ValueError(f"unknown name {node.id!r}")
            return names[node.id]
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            return _UNARY[type(node.op)](ev(node.operand))
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS \
                and not node.keywords:
            args = [ev(a) for a in node.args]
            fn = node.func.id
            if fn in ("min", "max") and len(args) != 2 or fn not in ("min", "max") and len(args) != 1:
                raise ValueError(f"wrong number of arguments to {fn}")
            return _FUNCS[fn](*args)
        raise ValueError(f"unsupported syntax {ast.dump(node)[:40]}")

    try:
        tree = ast.parse(expr.strip(), mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse expression {expr!r}") from exc
    with np.errstate(all="raise"):
        try:
            out = ev(tree)
        except FloatingPointError as exc:
            raise ValueError(f"expression {expr!r}: {exc}") from exc
    return np.broadcast_to(np.asarray(out, dtype=float), np.shape(x1)).copy()


@dataclass
class RunConfig:
    """Parsed configuration; keeps the raw parser for line lookup."""

    source: str
    grid: Grid2D
    beta: PiecewiseLinearBeta
    eps: float
    alpha: float
    s: float
    f: np.ndarray
    y_d: np.ndarray
    g_sh: np.ndarray
    solver: dict = field(default_factory=dict)
    optimize: dict = field(default_factory=dict)
    certify: dict = field(default_factory=dict)
    path: dict = field(default_factory=dict)
    mms: dict = field(default_factory=dict)
    g0: Optional[np.ndarray] = None
    g: Optional[np.ndarray] = None
    seed: int = 0

    def problem(self):
        from .objective import ProblemParams
        return ProblemParams(self.grid, self.beta, self.eps, self.alpha, self.s, self.f, self.y_d, self.g_sh,
                             state_tol=self.solver["tol"], max_newton=self.solver["max_iter"])


def _line_of(text: str, section: str, key: Optional[str] = None) -> Optional[int]:
    current = None
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if key is None and current == section:
                return n
            continue
        if current == section and key is not None:
            k = line.split("=", 1)[0].split(":", 1)[0].strip().lower()
            if k == key.lower():
                return n
    return None


_KNOWN = {
    "grid": {"nx", "ny", "domain", "e_rect"},
    "problem": {"eps", "alpha", "s", "f", "y_d", "g_sh", "g"},
    "beta": {"breakpoints", "slopes", "value_at_zero", "delta"},
    "solver": {"tol", "max_iter"},
    "optimize": {"step0", "max_iter", "cert_tol", "n_samples", "stat_tol", "g0"},
    "certify": {"n_samples", "tol_p", "tol_w"},
    "path": {"gammas", "gamma_start", "gamma_stop"},
    "mms": {"sizes", "exact", "minus_laplacian", "g"},
    "run": {"seed"},
}


def parse_config(text: str, source: str = "<config>", base_dir: Optional[Path] = None) -> RunConfig:
    """Parse INI text into a :class:`RunConfig`, raising :class:`ConfigError` with a line number."""
    base_dir = Path(".") if base_dir is None else Path(base_dir)
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0], getattr(exc, "lineno", None), source) from exc

    for sec in cp.sections():
        if sec not in _KNOWN:
            raise ConfigError(f"unknown section [{sec}]", _line_of(text, sec), source)
        for key in cp[sec]:
            if key not in _KNOWN[sec]:
                raise ConfigError(f"unknown key {key!r} in [{sec}]", _line_of(text, sec, key), source)

    def err(sec, key, msg):
        return ConfigError(msg, _line_of(text, sec, key), source)

    def get(sec, key, conv, default=None, required=False):
        if not cp.has_option(sec, key):
            if required:
                raise ConfigError(f"missing required key {key!r} in [{sec}]", _line_of(text, sec), source)
            return default
        raw = cp.get(sec, key)
        try:
            return conv(raw)
        except (ValueError, TypeError) as exc:
            raise err(sec, key, f"[{sec}] {key} = {raw!r}: {exc}") from exc

    def floats(raw):
        return tuple(float(x) for x in raw.replace(",", " ").split())

    def ints(raw):
        return tuple(int(x) for x in raw.replace(",", " ").split())

    nx = get("grid", "nx", int, required=True)
    ny = get("grid", "ny", int, default=nx)
    domain = get("grid", "domain", floats, (0.0, 1.0, 0.0, 1.0))
    e_rect = get("grid", "e_rect", floats, (0.25, 0.75, 0.25, 0.75))
    try:
        grid = build_grid(nx, ny, domain, e_rect)
    except ValueError as exc:
        raise err("grid", "nx", str(exc)) from exc

    try:
        beta = PiecewiseLinearBeta(
            get("beta", "breakpoints", floats, (0.0,)),
            get("beta", "slopes", floats, (0.0, 1.0)),
            get("beta", "value_at_zero", float, 0.0),
            get("beta", "delta", float, None),
        )
    except ValueError as exc:
        raise err("beta", "slopes", f"invalid beta: {exc}") from exc

    eps = get("problem", "eps", float, 0.1)
    if not eps > 0:
        raise err("problem", "eps", "eps must be positive")
    alpha = get("problem", "alpha", float, 0.0)
    if not alpha >= 0:
        raise err("problem", "alpha", "alpha must be non-negative")
    s = get("problem", "s", float, 0.5)
    if not (0 < s < 1 or 1 < s < 2):
        raise err("problem", "s", "s must lie in (0,1) or (1,2)")

    x1, x2 = grid.coords

    def field_of(sec, key, default):
        if not cp.has_option(sec, key):
            return None if default is None else np.full(grid.n, float(default))
        raw = cp.get(sec, key).strip()
        try:
            if raw.startswith("file:"):
                p = Path(raw[5:].strip())
                lf = load_field(p if p.is_absolute() else base_dir / p)
                if not lf.matches(grid):
                    raise ValueError(f"grid file is {lf.nx}x{lf.ny}, config grid is {grid.nx}x{grid.ny}")
                return lf.values
            return eval_expression(raw, x1, x2, eps)
        except (ValueError, OSError) as exc:
            raise err(sec, key, f"[{sec}] {key}: {exc}") from exc

    f = field_of("problem", "f", 0.0)
    y_d = field_of("problem", "y_d", 0.0)
    g_sh = field_of("problem", "g_sh", 0.0)
    if np.any(g_sh[grid.mask_E] > 0):
        raise err("problem", "g_sh", "g_sh must be <= 0 on E")

    solver = {"tol": get("solver", "tol", float, 1e-10), "max_iter": get("solver", "max_iter", int, 50)}
    opt = {
        "step0": get("optimize", "step0", float, 1.0),
        "max_iter": get("optimize", "max_iter", int, 200),
        "cert_tol": get("optimize", "cert_tol", float, 1e-6),
        "n_samples": get("optimize", "n_samples", int, 1000),
        "stat_tol": get("optimize", "stat_tol", float, 1e-8),
    }
    g0 = field_of("optimize", "g0", None)
    if g0 is not None and np.any(g0[grid.mask_E] > 0):
        raise err("optimize", "g0", "g0 must be <= 0 on E")
    cert = {
        "n_samples": get("certify", "n_samples", int, 1000),
        "tol_p": get("certify", "tol_p", float, 1e-7),
        "tol_w": get("certify", "tol_w", float, 1e-6),
    }
    path = {
        "gammas": get("path", "gammas", floats, None),
        "gamma_start": get("path", "gamma_start", float, 1e-1),
        "gamma_stop": get("path", "gamma_stop", float, 1e-4),
    }
    mms = {
        "sizes": get("mms", "sizes", ints, (15, 31, 63, 127)),
        "exact": cp.get("mms", "exact", fallback="sin(pi*x1)*sin(pi*x2)"),
        "minus_laplacian": cp.get("mms", "minus_laplacian", fallback="2*pi**2*sin(pi*x1)*sin(pi*x2)"),
        "g": cp.get("mms", "g", fallback="0"),
    }
    for key in ("exact", "minus_laplacian", "g"):
        try:
            eval_expression(mms[key], x1, x2, eps)
        except ValueError as exc:
            raise err("mms", key, f"[mms] {key}: {exc}") from exc
    return RunConfig(source, grid, beta, eps, alpha, s, f, y_d, g_sh, solver, opt, cert, path, mms,
                     g0=g0, g=field_of("problem", "g", None), seed=get("run", "seed", int, 0))


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", None, str(p)) from exc
    return parse_config(text, str(p), p.parent)
