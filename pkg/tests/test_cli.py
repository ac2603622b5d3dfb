import csv
import json

import numpy as np
import pytest

from freebound.cli import EXIT_CONFIG, EXIT_OK, main, read_field

ORACLE_1D = """\
mode = oracle
[grid]
dim = 1
origin = 0
extent = 1
n = 257
[boundary]
faces = xmin
kind = constant
value = 0.5
[diagnostics]
rmax = 0.2
audit_trials = 50
[output]
dir = {out}
run_id = {run}
"""

PLANE_2D = """\
mode = solve
[grid]
dim = 2
origin = -1
extent = 2
n = 129
[obstacle]
kind = constant
M0 = 10
[boundary]
kind = plane
[diagnostics]
count = 3
audit_trials = 20
gates = nonnegativity, supersolution, audit, weiss, density, slope
[output]
dir = {out}
run_id = {run}
"""


def _run(tmp_path, template, run, extra=(), **kw):
    path = tmp_path / f"{run}.ini"
    path.write_text(template.format(out=tmp_path, run=run, **kw))
    return main(["--config", str(path), "--quiet", *extra])


def test_oracle_1d(tmp_path):
    assert _run(tmp_path, ORACLE_1D, "a") == EXIT_OK
    out = tmp_path / "a"
    energy = json.loads((out / "energy.json").read_text())
    assert energy["sharp"]["total"] == pytest.approx(1.0, rel=0.02)
    assert energy["oracle"]["solver_fb"] == pytest.approx(0.5, abs=0.01)
    gates = json.loads((out / "gates.json").read_text())
    assert {g["name"] for g in gates} >= {"nonnegativity", "supersolution", "audit", "oracle_J", "oracle_fb"}
    assert all(g["passed"] for g in gates)
    u = read_field(out / "solution.json")
    assert u.values.shape == (257,)
    assert u.values[0] == 0.5


def test_violated_obstacle_exits_1(tmp_path):
    text = ORACLE_1D.replace("mode = oracle", "mode = solve") + "[nonlinear]\nkind = quadratic_affine\nkappa = 0.2\nF0 = 0.4\n[obstacle]\nkind = constant\nM0 = 2\n"
    assert _run(tmp_path, text, "bad") == EXIT_CONFIG


def test_config_error_exits_1(tmp_path, capsys):
    text = ORACLE_1D + "[nonlinear]\nkind = quadratic_affine\nlam = 0.9\nF0 = 1\n"
    assert _run(tmp_path, text, "err") == EXIT_CONFIG
    assert "lam" in capsys.readouterr().err


def test_missing_file_exits_1(tmp_path):
    assert main(["--config", str(tmp_path / "none.ini"), "--quiet"]) == EXIT_CONFIG


def _artifacts(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.suffix in (".csv", ".json", ".bin")}


def test_determinism_2d(tmp_path):
    assert _run(tmp_path, PLANE_2D, "r1") == EXIT_OK
    assert _run(tmp_path, PLANE_2D, "r2") == EXIT_OK
    a, b = _artifacts(tmp_path / "r1"), _artifacts(tmp_path / "r2")
    assert set(a) >= {"energy.json", "gates.json", "audit.json", "classification.json", "weiss_scan.csv", "solution.json"}
    assert a == b
    rows = list(csv.DictReader((tmp_path / "r1" / "weiss_scan.csv").read_text().splitlines()))
    assert set(rows[0]) == {"point_id", "r", "W", "F1", "Q1", "rho", "G"}
    classes = json.loads((tmp_path / "r1" / "classification.json").read_text())
    assert len(classes) == 3 and all(c["label"] == "Regular" for c in classes)


def test_diagnose_mode(tmp_path):
    assert _run(tmp_path, PLANE_2D, "base") == EXIT_OK
    sol = tmp_path / "base" / "solution.json"
    text = PLANE_2D.replace("mode = solve", "mode = diagnose").replace("count = 3", f"count = 3\nsolution = {sol}")
    assert _run(tmp_path, text, "diag") == EXIT_OK
    assert (tmp_path / "diag" / "classification.json").read_bytes() == (tmp_path / "base" / "classification.json").read_bytes()


def test_seed_override_changes_points(tmp_path):
    assert _run(tmp_path, PLANE_2D, "s0") == EXIT_OK
    assert _run(tmp_path, PLANE_2D, "s7", extra=("--seed", "7")) == EXIT_OK
    p0 = [c["point"] for c in json.loads((tmp_path / "s0" / "classification.json").read_text())]
    p7 = [c["point"] for c in json.loads((tmp_path / "s7" / "classification.json").read_text())]
    assert not np.allclose(p0, p7)


def test_sweep_mode(tmp_path):
    text = ORACLE_1D.replace("mode = oracle", "mode = sweep").replace("n = 257", "n = 257\nsweep = 129, 257")
    assert _run(tmp_path, text, "sw") == EXIT_OK
    rows = list(csv.DictReader((tmp_path / "sw" / "sweep.csv").read_text().splitlines()))
    assert [r["n"] for r in rows] == ["129", "257"]
    assert all(float(r["J"]) == pytest.approx(1.0, rel=0.02) for r in rows)
    assert (tmp_path / "sw" / "n129" / "energy.json").exists()
