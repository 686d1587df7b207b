"""Command-line entry point: ``nonsmooth-control {solve,optimize,certify,path,mms}``.

Exit codes: 0 certified or converged, 2 finished with violations, 3 solver
failure, 4 configuration error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .certificates import StationarityReport, certify
from .config import ConfigError, RunConfig, eval_expression, load_config
from .fieldio import dump_field, load_field, write_csv
from .grid import build_grid, integrate
from .heaviside import h_eps_field
from .objective import (
    OptimizeResult,
    default_gamma_schedule,
    first_variation_density,
    optimize,
    solve_regularized_path,
)
from .solvers import SolverError, solve_state

__all__ = ["main", "build_parser", "cmd_solve", "cmd_optimize", "cmd_certify", "cmd_path", "cmd_mms"]

EXIT_OK, EXIT_VIOLATION, EXIT_SOLVER, EXIT_CONFIG = 0, 2, 3, 4

log = logging.getLogger("nonsmooth_control")


def _write_report(out: Path, report: StationarityReport, worst: Optional[np.ndarray], grid) -> None:
    (out / "report.txt").write_text(report.to_text())
    (out / "report.csv").write_text(report.csv_header() + "\n" + report.csv_row() + "\n")
    if worst is not None:
        dump_field(out / "worst_direction.txt", grid, worst)


def cmd_solve(cfg: RunConfig, out: Path, best_effort: bool = False) -> int:
    g = cfg.g if cfg.g is not None else cfg.grid.zeros()
    y, rep = solve_state(cfg.grid, cfg.beta, cfg.eps, g, cfg.f, tol=cfg.solver["tol"],
                         max_iter=cfg.solver["max_iter"])
    dump_field(out / "y.txt", cfg.grid, y)
    row = rep.as_row()
    write_csv(out / "solve.csv", list(row), [list(row.values())])
    if not rep.converged:
        log.error("state solve did not converge: residual %.3e after %d iterations",
                  rep.final_residual, rep.iterations)
        return EXIT_OK if best_effort else EXIT_SOLVER
    return EXIT_OK


def _run_certificate(cfg: RunConfig, params, g, y=None, p=None, zeta=None, seed: int = 0):
    c = cfg.certify
    return certify(params, g, y, p, zeta, n_samples=c["n_samples"], seed=seed, tol_p=c["tol_p"],
                   tol_w=c["tol_w"], return_worst=True)


def cmd_optimize(cfg: RunConfig, out: Path, seed: int = 0, best_effort: bool = False) -> int:
    params = cfg.problem()
    g0 = cfg.g0 if cfg.g0 is not None else cfg.grid.zeros()
    o = cfg.optimize
    res: OptimizeResult = optimize(params, g0, step0=o["step0"], max_iter=o["max_iter"], cert_tol=o["cert_tol"],
                                   n_samples=o["n_samples"], seed=seed, stat_tol=o["stat_tol"])
    var = first_variation_density(params, res.g)
    for name, v in (("g", res.g), ("y", var.y), ("p", var.p), ("zeta", var.zeta)):
        dump_field(out / f"{name}.txt", cfg.grid, v)
    write_csv(out / "trace.csv", OptimizeResult.TRACE_HEADER, res.trace)
    rep, worst = _run_certificate(cfg, params, res.g, var.y, var.p, var.zeta, seed)
    _write_report(out, rep, worst, cfg.grid)
    if res.certified and rep.passed():
        return EXIT_OK
    log.warning("optimize finished with status %s; certificate passed=%s", res.status, rep.passed())
    return EXIT_VIOLATION


def cmd_certify(cfg: RunConfig, out: Path, candidate: Path, seed: int = 0) -> int:
    params = cfg.problem()
    fields = {}
    for name in ("g", "y", "p", "zeta"):
        path = candidate / f"{name}.txt"
        if not path.exists():
            if name == "g":
                raise ConfigError("candidate directory lacks g.txt", None, str(candidate))
            continue
        lf = load_field(path)
        if not lf.matches(cfg.grid):
            raise ConfigError(f"{path.name} is {lf.nx}x{lf.ny}, config grid is {cfg.grid.nx}x{cfg.grid.ny}",
                              None, str(path))
        fields[name] = lf.values
    g = fields["g"]
    if np.any(g[cfg.grid.mask_E] > 0):
        log.error("candidate control is infeasible on E")
        return EXIT_VIOLATION
    rep, worst = _run_certificate(cfg, params, g, fields.get("y"), fields.get("p"), fields.get("zeta"), seed)
    _write_report(out, rep, worst, cfg.grid)
    return EXIT_OK if rep.passed() else EXIT_VIOLATION


def cmd_path(cfg: RunConfig, out: Path, seed: int = 0, best_effort: bool = False) -> int:
    params = cfg.problem()
    pc = cfg.path
    gammas = list(pc["gammas"]) if pc["gammas"] else default_gamma_schedule(pc["gamma_start"], pc["gamma_stop"])
    o = cfg.optimize
    path = solve_regularized_path(params, gammas, cfg.g0, step0=o["step0"], max_iter=o["max_iter"],
                                  cert_tol=o["cert_tol"], n_samples=o["n_samples"], seed=seed,
                                  stat_tol=o["stat_tol"])
    last = path[-1]
    left, right = cfg.beta.one_sided(last.y, 1e-8 * (1 + float(np.max(np.abs(last.y)))))
    lo, hi = np.minimum(left, right), np.maximum(left, right)
    rows = []
    for pt in path:
        diff = math.sqrt(integrate(cfg.grid, (pt.y - last.y) ** 2))
        gap = float(np.max(np.maximum(lo - pt.zeta, pt.zeta - hi).clip(min=0.0)))
        rows.append((pt.gamma, pt.j, diff, gap, pt.status))
    write_csv(out / "path.csv", ("gamma", "j", "y_diff_L2", "zeta_gap", "status"), rows)
    for name, v in (("g", last.g), ("y", last.y), ("p", last.p), ("zeta", last.zeta)):
        dump_field(out / f"{name}.txt", cfg.grid, v)
    rep, worst = _run_certificate(cfg, params, last.g, seed=seed)
    _write_report(out, rep, worst, cfg.grid)
    if path.truncated:
        log.warning("path truncated at gamma=%g", path.failed_gamma)
        return EXIT_VIOLATION
    return EXIT_OK if rep.passed() else EXIT_VIOLATION


def mms_table(cfg: RunConfig) -> list[tuple[float, float, float]]:
    m = cfg.mms
    rows, prev = [], None
    for n in m["sizes"]:
        grid = build_grid(n, n, cfg.grid.domain_rect, cfg.grid.e_rect)
        x1, x2 = grid.coords
        exact = eval_expression(m["exact"], x1, x2, cfg.eps)
        g = eval_expression(m["g"], x1, x2, cfg.eps)
        f = (eval_expression(m["minus_laplacian"], x1, x2, cfg.eps) + cfg.beta(exact)
             + h_eps_field(g, cfg.eps) * exact / cfg.eps - cfg.eps * g)
        y, rep = solve_state(grid, cfg.beta, cfg.eps, g, f, tol=cfg.solver["tol"], max_iter=cfg.solver["max_iter"])
        if not rep.converged:
            raise SolverError(f"state solve at n={n} did not converge: {rep}")
        err = float(np.max(np.abs(y - exact)))
        order = math.nan if prev is None else math.log(prev[1] / err) / math.log(prev[0] / grid.h)
        rows.append((grid.h, err, order))
        prev = (grid.h, err)
    return rows


def cmd_mms(cfg: RunConfig, out: Path) -> int:
    rows = mms_table(cfg)
    write_csv(out / "mms.csv", ("h", "sup_error", "observed_order"), rows)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nonsmooth-control",
                                     description="Solve, optimize and certify the non-smooth control problem.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("solve", "solve the state equation"),
                        ("optimize", "projected descent plus certificate"),
                        ("certify", "certificate for a candidate directory"),
                        ("path", "mollified regularization path"),
                        ("mms", "manufactured-solution convergence table")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", action="append", required=True, metavar="PATH",
                       help="instance config (repeat for a sweep)")
        p.add_argument("--out", default="out", metavar="DIR", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="sampling seed (default: config or 0)")
        p.add_argument("--jobs", type=int, default=1, help="parallel workers for sweeps")
        p.add_argument("--best-effort", action="store_true", help="exit 0 on solver non-convergence")
        if name == "certify":
            p.add_argument("--candidate", required=True, metavar="DIR",
                           help="directory with g.txt and optionally y.txt, p.txt, zeta.txt")
    return parser


def _run_one(command: str, config: str, out: str, seed: Optional[int], best_effort: bool,
             candidate: Optional[str]) -> int:
    try:
        cfg = load_config(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = cfg.seed if seed is None else seed
    try:
        if command == "solve":
            return cmd_solve(cfg, out_dir, best_effort)
        if command == "optimize":
            return cmd_optimize(cfg, out_dir, seed, best_effort)
        if command == "certify":
            return cmd_certify(cfg, out_dir, Path(candidate), seed)
        if command == "path":
            return cmd_path(cfg, out_dir, seed, best_effort)
        return cmd_mms(cfg, out_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    candidate = getattr(args, "candidate", None)
    configs = args.config
    if len(configs) == 1:
        return _run_one(args.command, configs[0], args.out, args.seed, args.best_effort, candidate)
    outs = [str(Path(args.out) / Path(c).stem) for c in configs]
    jobs = [(args.command, c, o, args.seed, args.best_effort, candidate) for c, o in zip(configs, outs)]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            codes = list(pool.map(_run_one, *zip(*jobs)))
    else:
        codes = [_run_one(*j) for j in jobs]
    return max(codes)


if __name__ == "__main__":
    sys.exit(main())
