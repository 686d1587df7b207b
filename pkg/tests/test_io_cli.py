import math
from pathlib import Path

import numpy as np
import pytest

from nonsmooth_control.cli import main, mms_table
from nonsmooth_control.config import ConfigError, eval_expression, load_config, parse_config
from nonsmooth_control.fieldio import dump_field, format_field, load_field
from nonsmooth_control.grid import build_grid

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_dump_load_dump_byte_identical(tmp_path, rng):
    grid = build_grid(15, 15, e_rect=(0.3, 0.6, 0.2, 0.8))
    v = rng.normal(size=grid.n) * 10.0 ** rng.integers(-300, 300, grid.n)
    dump_field(tmp_path / "a.txt", grid, v)
    lf = load_field(tmp_path / "a.txt")
    assert np.array_equal(lf.values, v)
    assert lf.e_rect == (0.3, 0.6, 0.2, 0.8)
    dump_field(tmp_path / "b.txt", lf.grid(), lf.values)
    assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()


def test_dump_header(grid31):
    text = format_field(grid31, grid31.zeros())
    lines = text.splitlines()
    assert lines[0] == "# nx ny h"
    assert lines[1].split()[:2] == ["31", "31"]
    assert len(lines) == 3 + 31


def test_load_rejects_bad_shape(tmp_path):
    (tmp_path / "bad.txt").write_text("# nx ny h\n3 3 0.25\n1 2 3\n")
    with pytest.raises(ValueError):
        load_field(tmp_path / "bad.txt")


@pytest.mark.parametrize("expr,expected", [
    ("1", 1.0), ("-2.5", -2.5), ("x1 + x2", 1.0), ("2*pi", 2 * math.pi), ("eps/2", 0.05),
    ("max(x1, 0.7)", 0.7), ("min(x1, 0.7)", 0.5), ("sin(pi*x1)", 1.0), ("exp(0)", 1.0), ("cos(0)**2", 1.0),
])
def test_expressions(expr, expected):
    out = eval_expression(expr, np.array([0.5]), np.array([0.5]), 0.1)
    assert out[0] == pytest.approx(expected)


@pytest.mark.parametrize("expr", ["__import__('os')", "x3", "abs(x1)", "x1 if x2 else 0", "sin(x1, x2)",
                                  "[1]", "x1 @ x2", "sin(", "True"])
def test_expressions_rejected(expr):
    with pytest.raises(ValueError):
        eval_expression(expr, np.array([0.5]), np.array([0.5]), 0.1)


def test_config_loads_unit_square():
    cfg = load_config(CONFIGS / "unit_square.ini")
    assert cfg.grid.nx == 31 and cfg.eps == 0.1 and cfg.alpha == 1.0
    assert np.all(cfg.f == -1.0) and np.all(cfg.y_d == -0.1)
    assert cfg.beta.breakpoints == (0.0,)


@pytest.mark.parametrize("text,line", [
    ("[grid]\nnx = 15\n[problem]\neps = -1\n", 4),
    ("[grid]\nnx = 15\n\n[problem]\nf = sin(\n", 5),
    ("[grid]\nnx = 15\n[beta]\nbreakpoints = 0\nslopes = 1, 1\n", 5),
    ("[grid]\nnx = 15\nbogus = 1\n", 3),
    ("[grid]\nnx = fifteen\n", 2),
    ("[grid]\nnx = 15\n[problem]\ng_sh = 1\n", 4),
    ("[grid]\nnx = 15\n[weird]\n", 3),
])
def test_config_errors_have_line_numbers(text, line):
    with pytest.raises(ConfigError) as exc:
        parse_config(text, "t.ini")
    assert exc.value.line == line
    assert f"t.ini:{line}" in str(exc.value)


def test_config_missing_grid():
    with pytest.raises(ConfigError, match="missing required key 'nx'"):
        parse_config("[problem]\neps = 0.1\n")


def test_config_file_field(tmp_path, grid31):
    dump_field(tmp_path / "f.txt", grid31, grid31.x1)
    (tmp_path / "c.ini").write_text("[grid]\nnx = 31\n[problem]\nf = file:f.txt\n")
    cfg = load_config(tmp_path / "c.ini")
    assert np.array_equal(cfg.f, grid31.x1)
    (tmp_path / "d.ini").write_text("[grid]\nnx = 15\n[problem]\nf = file:f.txt\n")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "d.ini")


def test_cli_solve_zero(tmp_path):
    assert main(["solve", "--config", str(CONFIGS / "zero.ini"), "--out", str(tmp_path)]) == 0
    assert np.all(load_field(tmp_path / "y.txt").values == 0)
    assert (tmp_path / "solve.csv").read_text().splitlines()[0] == "iterations,final_residual,converged,damping_events"


def test_cli_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[grid]\nnx = 15\n[problem]\neps = 0\n")
    assert main(["solve", "--config", str(bad), "--out", str(tmp_path)]) == 4
    assert "bad.ini:4" in capsys.readouterr().err


def test_cli_solver_failure_exit_codes(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[grid]\nnx = 15\n[problem]\nf = 50*sin(9*x1)\n[solver]\ntol = 1e-30\nmax_iter = 1\n")
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 3
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "b"), "--best-effort"]) == 0


def test_cli_mms_orders(tmp_path):
    cfg = tmp_path / "m.ini"
    cfg.write_text((CONFIGS / "mms.ini").read_text().replace("15, 31, 63, 127", "15, 31, 63"))
    assert main(["mms", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "mms.csv").read_text().splitlines()
    assert rows[0] == "h,sup_error,observed_order"
    orders = [float(r.split(",")[2]) for r in rows[2:]]
    assert len(orders) == 2 and min(orders) >= 1.8


def test_cli_optimize_then_certify_round_trip(tmp_path):
    cfg = tmp_path / "u.ini"
    cfg.write_text((CONFIGS / "unit_square.ini").read_text().replace("n_samples = 1000", "n_samples = 200"))
    opt = tmp_path / "opt"
    assert main(["optimize", "--config", str(cfg), "--out", str(opt)]) == 0
    for name in ("g", "y", "p", "zeta", "worst_direction"):
        assert (opt / f"{name}.txt").exists()
    assert (opt / "trace.csv").read_text().startswith("iter,j,step,vi_min,proxy\n")
    cert = tmp_path / "cert"
    assert main(["certify", "--config", str(cfg), "--candidate", str(opt), "--out", str(cert)]) == 0
    a = dict(line.split(" = ") for line in (opt / "report.txt").read_text().splitlines() if " = " in line)
    b = dict(line.split(" = ") for line in (cert / "report.txt").read_text().splitlines() if " = " in line)
    assert a.keys() == b.keys()
    for k in a:
        if a[k] in ("true", "false"):
            assert a[k] == b[k]
        else:
            x, y = float(a[k]), float(b[k])
            assert (math.isnan(x) and math.isnan(y)) or abs(x - y) <= 1e-12 * max(1.0, abs(x))


def test_cli_certify_flags_bad_candidate(tmp_path, grid31):
    cand = tmp_path / "cand"
    cand.mkdir()
    dump_field(cand / "g.txt", grid31, grid31.zeros())
    cfg = tmp_path / "u.ini"
    cfg.write_text((CONFIGS / "unit_square.ini").read_text().replace("n_samples = 1000", "n_samples = 100"))
    assert main(["certify", "--config", str(cfg), "--candidate", str(cand), "--out", str(tmp_path / "o")]) == 2
    assert "passed = false" in (tmp_path / "o" / "report.txt").read_text()
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["certify", "--config", str(cfg), "--candidate", str(empty), "--out", str(tmp_path / "p")]) == 4


def test_cli_deterministic(tmp_path):
    cfg = tmp_path / "u.ini"
    cfg.write_text((CONFIGS / "unit_square.ini").read_text().replace("n_samples = 1000", "n_samples = 100"))
    for run in ("r1", "r2"):
        assert main(["optimize", "--config", str(cfg), "--out", str(tmp_path / run), "--seed", "3"]) == 0
    for name in ("trace.csv", "report.csv", "report.txt", "g.txt"):
        assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes()


def test_cli_path(tmp_path):
    cfg = tmp_path / "p.ini"
    cfg.write_text((CONFIGS / "path.ini").read_text().replace("gamma_stop = 1e-4", "gamma_stop = 0.02"))
    assert main(["path", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "path.csv").read_text().splitlines()
    assert rows[0] == "gamma,j,y_diff_L2,zeta_gap,status"
    assert len(rows) == 1 + 3


def test_cli_sweep_with_jobs(tmp_path):
    a = tmp_path / "a.ini"
    b = tmp_path / "b.ini"
    a.write_text((CONFIGS / "zero.ini").read_text())
    b.write_text("[grid]\nnx = 15\n[problem]\nf = 1\n")
    out = tmp_path / "out"
    assert main(["solve", "--config", str(a), "--config", str(b), "--out", str(out), "--jobs", "2"]) == 0
    assert (out / "a" / "y.txt").exists() and (out / "b" / "y.txt").exists()


def test_mms_table_direct():
    cfg = load_config(CONFIGS / "mms.ini")
    cfg.mms["sizes"] = (15, 31)
    rows = mms_table(cfg)
    assert math.isnan(rows[0][2]) and rows[1][2] >= 1.8
