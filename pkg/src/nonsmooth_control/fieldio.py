"""Plain-text grid dumps and CSV helpers.

Dump layout::

    # nx ny h
    <nx> <ny> <h>
    # masks: domain=(...) e_rect=(...) rows=x2 ascending, columns=x1 ascending, interior nodes only
    <ny rows of nx values>

Values use ``%.16e`` which round-trips IEEE doubles, so dump -> load -> dump
is byte-identical.
"""

from __future__ import annotations

import ast
import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .grid import Grid2D, build_grid

__all__ = ["LoadedField", "dump_field", "format_field", "load_field", "write_csv", "fmt_value"]

_FMT = "%.16e"


@dataclass(frozen=True, eq=False)
class LoadedField:
    values: np.ndarray
    nx: int
    ny: int
    h: float
    domain_rect: tuple
    e_rect: tuple

    def grid(self) -> Grid2D:
        return build_grid(self.nx, self.ny, self.domain_rect, self.e_rect)

    def matches(self, grid: Grid2D) -> bool:
        return (self.nx, self.ny) == (grid.nx, grid.ny) and np.isclose(self.h, grid.h, rtol=1e-14, atol=0)


def format_field(grid: Grid2D, v: np.ndarray) -> str:
    v = np.asarray(v, dtype=float).reshape(grid.shape)
    head = [
        "# nx ny h",
        f"{grid.nx} {grid.ny} {_FMT % grid.h}",
        f"# masks: domain={tuple(grid.domain_rect)!r} e_rect={tuple(grid.e_rect)!r} "
        "rows=x2 ascending, columns=x1 ascending, interior nodes only",
    ]
    body = [" ".join(_FMT % x for x in row) for row in v]
    return "\n".join(head + body) + "\n"


def dump_field(path, grid: Grid2D, v: np.ndarray) -> None:
    Path(path).write_text(format_field(grid, v))


def load_field(path) -> LoadedField:
    lines = Path(path).read_text().splitlines()
    data = [ln for ln in lines if ln.strip() and not ln.startswith("#")]
    meta = [ln for ln in lines if ln.startswith("# masks:")]
    if not data:
        raise ValueError(f"{path}: empty field file")
    parts = data[0].split()
    if len(parts) != 3:
        raise ValueError(f"{path}: expected 'nx ny h' header, got {data[0]!r}")
    nx, ny, h = int(parts[0]), int(parts[1]), float(parts[2])
    rows = [np.array(ln.split(), dtype=float) for ln in data[1:]]
    if len(rows) != ny or any(r.size != nx for r in rows):
        raise ValueError(f"{path}: expected {ny} rows of {nx} values")
    domain = (0.0, 1.0, 0.0, 1.0)
    e_rect = (0.25, 0.75, 0.25, 0.75)
    if meta:
        for tok in ("domain", "e_rect"):
            key = f"{tok}="
            i = meta[0].find(key)
            if i >= 0:
                j = meta[0].index(")", i)
                val = tuple(float(x) for x in ast.literal_eval(meta[0][i + len(key):j + 1]))
                if tok == "domain":
                    domain = val
                else:
                    e_rect = val
    return LoadedField(np.vstack(rows).ravel(), nx, ny, h, domain, e_rect)


def fmt_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return format(float(v), ".16e")


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt_value(v) for v in row])
