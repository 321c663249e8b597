import json
import subprocess
import sys

import numpy as np
import pytest

from pshenvelope import ScalarField, make_geometry, read_field, write_field_csv
from pshenvelope.cli import run_command
from pshenvelope.io import ConfigError, SchemaError, load_config, parse_config, write_summary
from pshenvelope.geometry import GeometryMismatchError


@pytest.mark.parametrize("geom", [make_geometry("cp1-radial", 33), make_geometry("torus-1", 16),
                                  make_geometry("torus-2", 8), make_geometry("torus-2", (8, 8, 8, 8))],
                         ids=["cp1", "t1", "t2-reduced", "t2-full"])
def test_field_round_trip_is_exact(tmp_path, geom):
    vals = np.random.default_rng(7).standard_normal(geom.shape) * 1e3
    path = write_field_csv(ScalarField(geom, vals), tmp_path / "phi.csv")
    back = read_field(path)
    assert back.geometry.shape == geom.shape
    assert np.array_equal(back.values, vals)
    assert np.array_equal(read_field(path, geom).values, vals)


def test_read_rejects_wrong_grid(tmp_path):
    g = make_geometry("cp1-radial", 33)
    path = write_field_csv(ScalarField(g, np.zeros(33)), tmp_path / "a.csv")
    with pytest.raises(GeometryMismatchError):
        read_field(path, make_geometry("cp1-radial", 34))
    with pytest.raises(SchemaError):
        read_field(path, make_geometry("torus-1", 33))
    (tmp_path / "bad.csv").write_text("m,phi\n0,1\n0.5\n")
    with pytest.raises(SchemaError):
        read_field(tmp_path / "bad.csv")


def test_summary_is_deterministic(tmp_path):
    rep = {"b": np.float64(0.1), "a": [np.int64(3), np.bool_(True)], "c": float("inf")}
    write_summary(rep, tmp_path / "s.json")
    assert json.loads((tmp_path / "s.json").read_text()) == {"a": [3, True], "b": 0.1, "c": "inf"}


def test_minimal_config_gets_defaults():
    cfg = parse_config('manifold = "cp1-radial"\nN = 2048\nobstacle = "cp1-section4"\n')
    assert cfg.resolution == 2048
    assert cfg.eps_schedule == (1e-1, 3e-2, 1e-2, 3e-3, 1e-3)
    assert cfg.newton_tol == 1e-10 and cfg.lcp_tol == 1e-9


@pytest.mark.parametrize("text", [
    'eps_schedule = [0.5, 0.9]',
    'eps = 1.5',
    'eps_schedule = []',
    'colour = "blue"',
    'manifold = "torus-1"\nresolution = 4',
    'manifold = "klein"',
    'manifold = "torus-2"\nmethod = "lcp"',
    'resolution = "big"',
    'this is not toml',
])
def test_bad_config_rejected(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.toml")


def _write(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_envelope_of_zero_obstacle(tmp_path):
    cfg = _write(tmp_path, 'manifold = "torus-1"\nresolution = 64\nobstacle = "constant(c=0)"\n')
    assert run_command(["envelope", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    fld = read_field(tmp_path / "o" / "envelope.csv")
    assert np.all(fld.values == 0)
    header = (tmp_path / "o" / "envelope.csv").read_text().splitlines()[0]
    assert header == "x1,f,phi,lower,upper"
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    for key in ("c0", "eps_schedule", "sup_grad", "sup_lambda1", "max_phi_minus_f", "jump_at_r1", "seed"):
        assert key in summary


def test_envelope_csv_schema_on_cp1(tmp_path):
    assert run_command(["envelope", "--obstacle", "cp1-section4", "--resolution", "64", "--eps", "0.1,0.05",
                        "--out", str(tmp_path)]) == 0
    assert (tmp_path / "envelope.csv").read_text().splitlines()[0] == "m,r,f,phi,lower,upper"


@pytest.mark.parametrize("argv", [
    ["envelope"],
    ["envelope", "--config", "/nonexistent/c.toml"],
    ["envelope", "--obstacle", "volcano(A=1)"],
    ["envelope", "--obstacle", "expr:0.5*(1+"],
    ["envelope", "--obstacle", "constant", "--eps", "0.01,0.1"],
    ["envelope", "--obstacle", "constant", "--resolution", "abc"],
    ["oracle", "--obstacle", "constant", "--resolution", "4"],
    ["frobnicate"],
])
def test_configuration_errors_exit_2(tmp_path, argv):
    assert run_command(argv + ["--out", str(tmp_path)] if argv != ["frobnicate"] else argv) == 2


def test_solver_failure_exits_1(tmp_path):
    cfg = _write(tmp_path, 'manifold = "torus-1"\nresolution = 64\nobstacle = "cos-wave(A=0.5)"\n'
                           'newton_max_iter = 1\n')
    assert run_command(["solve-penalized", "--config", cfg, "--out", str(tmp_path / "o")]) == 1


def test_outputs_are_reproducible(tmp_path):
    args = ["stability-check", "--obstacle", "cos-wave(A=0.5)", "--seed", "42", "--method", "lcp"]
    cfg = _write(tmp_path, 'manifold = "torus-1"\nresolution = 64\ntrials = 5\n')
    for d in ("a", "b"):
        assert run_command(args + ["--config", cfg, "--out", str(tmp_path / d)]) == 0
    assert (tmp_path / "a" / "summary.json").read_bytes() == (tmp_path / "b" / "summary.json").read_bytes()
    for d in ("c", "d"):
        assert run_command(["sweep-eps", "--obstacle", "cp1-section4", "--resolution", "128",
                            "--out", str(tmp_path / d)]) == 0
    for name in ("sweep.csv", "summary.json", "phi_eps_0.001.csv"):
        assert (tmp_path / "c" / name).read_bytes() == (tmp_path / "d" / name).read_bytes()


def test_obstacle_from_file(tmp_path):
    g = make_geometry("torus-1", 64)
    vals = 0.5 * np.cos(2 * np.pi * g.nodes["x1"])
    write_field_csv(ScalarField(g, vals), tmp_path / "f.csv", name="f")
    cfg = _write(tmp_path, 'manifold = "torus-1"\nresolution = 64\nmethod = "lcp"\n')
    assert run_command(["oracle", "--config", cfg, "--obstacle", f"file:{tmp_path / 'f.csv'}",
                        "--out", str(tmp_path / "a")]) == 0
    assert run_command(["oracle", "--config", cfg, "--obstacle", "cos-wave(A=0.5)",
                        "--out", str(tmp_path / "b")]) == 0
    a = read_field(tmp_path / "a" / "oracle.csv").values
    b = read_field(tmp_path / "b" / "oracle.csv").values
    assert np.array_equal(a, b)


@pytest.mark.parametrize("cmd", ["solve-penalized", "oracle", "diagnose"])
def test_other_subcommands_run(tmp_path, cmd):
    assert run_command([cmd, "--obstacle", "cos-wave(A=0.5)", "--out", str(tmp_path),
                        "--config", _write(tmp_path, 'manifold = "torus-1"\nresolution = 64\n')]) == 0


def test_product_check_subcommand(tmp_path):
    cfg = _write(tmp_path, 'manifold = "torus-2"\nresolution = 16\nobstacle = "cos-wave(A=0.5)"\n')
    assert run_command(["product-check", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    assert json.loads((tmp_path / "o" / "summary.json").read_text())["passed"]


def test_validate_cp1_reports_closed_form_match(tmp_path):
    code = run_command(["validate-cp1", "--resolution", "2048", "--out", str(tmp_path)])
    summary = json.loads((tmp_path / "summary.json").read_text())
    checks = {c["name"]: c for c in summary["checks"]}
    match = checks["closed-form match on U (<= 5e-3)"]
    assert match["passed"] and match["value"] <= 5e-3
    assert code == (0 if summary["passed"] else 1)


@pytest.mark.xfail(strict=True, reason="the Hessian plateau checks fail on this obstacle; see README")
def test_validate_cp1_passes_every_check(tmp_path):
    assert run_command(["validate-cp1", "--resolution", "4096", "--out", str(tmp_path)]) == 0


def test_console_script_version():
    out = subprocess.run([sys.executable, "-m", "pshenvelope", "--version"], capture_output=True,
                         text=True)
    assert out.returncode == 0 and "pshenvelope" in out.stdout
