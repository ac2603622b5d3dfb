"""Command line driver: solve, diagnose, sweep and oracle runs with CSV/JSON artifacts.

Exit codes: 0 every enabled gate passed, 1 configuration or validation
error, 2 solver not converged (artifacts still written), 3 a gate failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import diagnostics as D
from .config import ConfigError, RunConfig, parse_config, serialize
from .energy import positivity_threshold, total_energy
from .grid import GridSpec, ScalarField, build_grid
from .levelset import extract_free_boundary
from .minimizer import Solution, SolverError, competitor_audit, solve
from .model import ModelError, ModelSpec, validate_model
from .oracle import one_d_brute_force, one_d_exact, plane_field

log = logging.getLogger("freebound")

EXIT_OK, EXIT_CONFIG, EXIT_UNCONVERGED, EXIT_GATE = 0, 1, 2, 3
FLOAT_DIGITS = 12


# ----------------------------------------------------------------------------
# deterministic writers


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return str(x)
        return float(f"{x:.{FLOAT_DIGITS}g}")
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def _fmt(x: float) -> str:
    return f"{float(x):.{FLOAT_DIGITS}g}"


def write_json(path: Path, obj):
    path.write_text(dumps(obj))


def write_field(run_dir: Path, u: ScalarField):
    """Little-endian float64 values in row-major node order plus a JSON header."""
    (run_dir / "solution.bin").write_bytes(np.ascontiguousarray(u.values, dtype="<f8").tobytes())
    g = u.grid
    write_json(
        run_dir / "solution.json",
        {
            "dim": g.dim,
            "origin": list(g.origin),
            "extent": list(g.upper - g.origin),
            "n": list(g.shape),
            "dtype": "float64",
            "byte_order": "little",
            "order": "row-major",
            "file": "solution.bin",
        },
    )


def read_field(header_path: str | Path) -> ScalarField:
    header_path = Path(header_path)
    head = json.loads(header_path.read_text())
    grid = build_grid(GridSpec(head["dim"], tuple(head["origin"]), tuple(head["extent"]), tuple(head["n"])))
    raw = (header_path.parent / head.get("file", "solution.bin")).read_bytes()
    vals = np.frombuffer(raw, dtype="<f8").reshape(grid.shape)
    return ScalarField(grid, vals.copy())


WEISS_COLUMNS = ("point_id", "r", "W", "F1", "Q1", "rho", "G")


def weiss_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(WEISS_COLUMNS)
    for pid, s in rows:
        w.writerow([pid] + [_fmt(x) for x in s.row()])
    return buf.getvalue()


# ----------------------------------------------------------------------------
# gates


def _gate(name, passed, value, threshold, note=""):
    return {"name": name, "passed": bool(passed), "value": value, "threshold": threshold, "note": note}


def _solver_gates(cfg: RunConfig, spec: ModelSpec, sol: Solution, audit) -> list[dict]:
    enabled = set(cfg.diagnostics.gates)
    out = []
    u = sol.u.values
    if "nonnegativity" in enabled:
        m = float(u.min())
        out.append(_gate("nonnegativity", m >= 0.0, m, 0.0))
    if "supersolution" in enabled:
        m = D.supersolution_defect(sol.u, spec)
        thr = -cfg.diagnostics.supersolution_tol * spec.scale
        out.append(_gate("supersolution", m >= thr, m, thr))
    if "audit" in enabled and audit is not None:
        out.append(_gate("audit", audit.passed, audit.worst_margin, -audit.tol, f"{audit.violations} of {audit.trials} trials"))
    return out


# ----------------------------------------------------------------------------
# diagnostics


def _radii(cfg: RunConfig, h: float) -> np.ndarray:
    d = cfg.diagnostics
    if d.radii:
        return np.asarray(d.radii, dtype=float)
    rmin = d.rmin if d.rmin is not None else 6 * h
    return D.dyadic_radii(rmin, d.rmax, d.per_octave)


def _points(cfg: RunConfig, u: ScalarField, fb, radii) -> np.ndarray:
    pts = cfg.explicit_points()
    if pts is not None:
        return pts
    margin = float(radii[-1]) + 2 * u.grid.hmin
    return D.sample_free_boundary(fb, cfg.diagnostics.count, u.grid, margin, seed=cfg.diagnostics.seed)


def run_diagnostics(cfg: RunConfig, spec: ModelSpec, u: ScalarField) -> tuple[list, list[dict], list[dict]]:
    """Weiss scan rows, classification entries and diagnostic gates."""
    d = cfg.diagnostics
    enabled = set(d.gates)
    h = u.grid.hmin
    fb = extract_free_boundary(u, positivity_threshold(u.values, cfg.solver.fb_level))
    radii = _radii(cfg, h)
    pts = _points(cfg, u, fb, radii)
    rows, classes, gates = [], [], []
    worst = math.inf
    for pid, p in enumerate(pts):
        rep = D.weiss_scan(u, spec, p, radii, fb_level=cfg.solver.fb_level)
        rows.extend((pid, s) for s in rep.samples)
        worst = min(worst, rep.worst_drop / max(abs(rep.samples[-1].W), 1e-300))
    if "weiss" in enabled:
        if len(pts):
            gates.append(_gate("weiss", worst >= -d.weiss_tol, worst, -d.weiss_tol, "worst forward drop of G over |W(rmax)|"))
        else:
            gates.append(_gate("weiss", True, None, -d.weiss_tol, "no free-boundary points"))
    ccfg = D.ClassifyConfig(delta_reg=d.delta_reg, fb_level=cfg.solver.fb_level)
    labels = []
    for p in pts:
        try:
            c = D.classify_point(u, spec, p, ccfg)
        except D.DiagnosticError as exc:
            log.warning("classification skipped at %s: %s", p.tolist(), exc)
            continue
        classes.append(c.to_dict())
        labels.append(c.label)
    if "density" in enabled:
        bad = sum(1 for lab in labels if lab != "Regular")
        note = "no free-boundary points" if not len(pts) else f"{len(labels)} classified"
        gates.append(_gate("density", bad == 0 and (len(labels) == len(pts)), bad, 0, note))
    if "slope" in enabled:
        if fb.empty:
            gates.append(_gate("slope", True, None, 0.1, "no free boundary"))
        else:
            sl = D.slope_check(u, spec, fb, d.slope_tol, cfg.solver.fb_level)
            med = sl.median
            ok = np.isfinite(med) and abs(med - 1.0) <= d.slope_tol
            gates.append(_gate("slope", ok, med, d.slope_tol, "median inward slope over Q"))
    return rows, classes, gates


# ----------------------------------------------------------------------------
# pipeline


def _prepare_dir(cfg: RunConfig, sub: str = "") -> Path:
    run_dir = Path(cfg.output.dir) / cfg.output.run_id
    if sub:
        run_dir = run_dir / sub
    run_dir.mkdir(parents=True, exist_ok=True)
    return run_dir


def _energy_report(spec: ModelSpec, sol: Solution) -> dict:
    fb = sol.fb
    return {
        "sharp": sol.energy.to_dict(),
        "smoothed": total_energy(sol.u, spec, eps=sol.eps).to_dict(),
        "eps": sol.eps,
        "converged": sol.converged,
        "iterations": sol.iterations,
        "grad_norm": sol.grad_norm,
        "stage_iterations": sol.stage_iterations,
        "stage_sharp_energy": sol.sharp_history,
        "free_boundary_measure": fb.length_or_area if fb.dim > 1 else float(len(fb.points)),
        "h": spec.grid.hmin,
    }


def _write_outputs(cfg, run_dir, energy=None, rows=None, classes=None, audit=None, gates=None):
    fm = set(cfg.output.formats)
    if "json" in fm:
        if energy is not None:
            write_json(run_dir / "energy.json", energy)
        if classes is not None:
            write_json(run_dir / "classification.json", classes)
        if audit is not None:
            write_json(run_dir / "audit.json", audit)
        if gates is not None:
            write_json(run_dir / "gates.json", gates)
    if "csv" in fm and rows is not None:
        (run_dir / "weiss_scan.csv").write_text(weiss_csv(rows))


def _status(converged: bool, gates: list[dict]) -> int:
    failed = [g["name"] for g in gates if not g["passed"]]
    if not converged:
        log.error("solver did not converge")
        return EXIT_UNCONVERGED
    if failed:
        log.error("gate failed: %s", ", ".join(failed))
        return EXIT_GATE
    return EXIT_OK


def _validated_model(cfg: RunConfig, n=None) -> ModelSpec:
    spec = cfg.model(n)
    radii = _radii(cfg, spec.grid.hmin)
    if radii.size < 3:
        raise ModelError(f"only {radii.size} Weiss radii in [rmin, rmax] at h = {spec.grid.hmin:g}; need 3")
    rep = validate_model(spec)
    if not rep.ok:
        msgs = "; ".join(f"{c.name} (worst {c.worst:g} at {c.witness})" for c in rep.checks if not c.passed)
        raise ModelError(f"model validation failed: {msgs}")
    return spec


def _solve_and_report(cfg: RunConfig, spec: ModelSpec, run_dir: Path, extra_gates=None, energy_extra=None):
    sol = solve(spec, cfg.solver_config())
    write_field(run_dir, sol.u)
    audit = competitor_audit(sol, spec, cfg.diagnostics.audit_trials, seed=cfg.diagnostics.seed, rel_tol=cfg.diagnostics.audit_tol)
    gates = _solver_gates(cfg, spec, sol, audit)
    energy = _energy_report(spec, sol)
    if energy_extra:
        energy.update(energy_extra(sol))
    if extra_gates:
        gates.extend(extra_gates(sol))
    rows, classes, dgates = run_diagnostics(cfg, spec, sol.u)
    gates.extend(dgates)
    _write_outputs(cfg, run_dir, energy, rows, classes, audit.to_dict(), gates)
    return sol, energy, gates


def run_solve(cfg: RunConfig) -> int:
    spec = _validated_model(cfg)
    sol, _, gates = _solve_and_report(cfg, spec, _prepare_dir(cfg))
    return _status(sol.converged, gates)


def run_diagnose(cfg: RunConfig) -> int:
    u = read_field(cfg.diagnostics.solution)
    if u.grid.spec != cfg.grid_spec():
        raise ModelError("stored solution grid differs from [grid]")
    spec = _validated_model(cfg)
    run_dir = _prepare_dir(cfg)
    rows, classes, gates = run_diagnostics(cfg, spec, u)
    if "nonnegativity" in cfg.diagnostics.gates:
        m = float(u.values.min())
        gates.insert(0, _gate("nonnegativity", m >= 0.0, m, 0.0))
    if "supersolution" in cfg.diagnostics.gates:
        m = D.supersolution_defect(u, spec)
        thr = -cfg.diagnostics.supersolution_tol * spec.scale
        gates.insert(1, _gate("supersolution", m >= thr, m, thr))
    energy = {"sharp": total_energy(u, spec).to_dict(), "h": spec.grid.hmin}
    _write_outputs(cfg, run_dir, energy, rows, classes, None, gates)
    return _status(True, gates)


SWEEP_COLUMNS = ("n", "h", "J", "converged", "iterations", "fb_measure", "gates_passed")


def run_sweep(cfg: RunConfig) -> int:
    base = _prepare_dir(cfg)
    lines = [",".join(SWEEP_COLUMNS)]
    codes = []
    for n in cfg.grid.sweep:
        nn = (n,) * cfg.grid.dim
        spec = _validated_model(cfg, nn)
        sub = _prepare_dir(cfg, f"n{n}")
        sol, energy, gates = _solve_and_report(cfg, spec, sub)
        ok = all(g["passed"] for g in gates)
        lines.append(
            ",".join(
                [str(n), _fmt(spec.grid.hmin), _fmt(sol.J), str(sol.converged).lower(), str(sol.iterations), _fmt(energy["free_boundary_measure"]), str(ok).lower()]
            )
        )
        codes.append(_status(sol.converged, gates))
    (base / "sweep.csv").write_text("\n".join(lines) + "\n")
    return max(codes) if codes else EXIT_OK


def _oracle_hooks(cfg: RunConfig, spec: ModelSpec):
    d = cfg.diagnostics
    grid = spec.grid
    if grid.dim == 1:
        kappa = cfg.nonlinear.kappa if cfg.nonlinear.kind == "quadratic_affine" else 0.0
        lam = cfg.nonlinear.lam if cfg.nonlinear.kind == "quadratic_affine" else 0.0
        q0 = float(spec.Q(grid.origin[None])[0])
        exact = one_d_exact(cfg.boundary.value, q0, kappa, lam, grid) if cfg.force.kind == "constant" else None
        xb, Jb = one_d_brute_force(spec, d.n_fb)

        def info(sol):
            fbx = float(sol.fb.points[0, 0]) if len(sol.fb.points) else float("nan")
            out = {"brute_force": {"x_star": xb, "J": Jb}, "solver_fb": fbx}
            if exact is not None:
                out["exact"] = {"x_star": float(exact.fb_location[0]), "J": exact.J_exact}
            return {"oracle": out}

        def gates(sol):
            fbx = float(sol.fb.points[0, 0]) if len(sol.fb.points) else float("nan")
            ref_x = float(exact.fb_location[0]) if exact is not None else xb
            relJ = abs(sol.J - Jb) / max(abs(Jb), 1e-300)
            return [
                _gate("oracle_J", relJ <= d.oracle_J_tol, relJ, d.oracle_J_tol, "relative to brute force"),
                _gate("oracle_fb", abs(fbx - ref_x) <= d.oracle_fb_tol, abs(fbx - ref_x), d.oracle_fb_tol),
            ]

        return info, gates
    b = cfg.boundary
    nu = np.zeros(grid.dim)
    if b.nu:
        nu[:] = b.nu
        nu /= np.linalg.norm(nu)
    else:
        nu[0] = 1.0
    off = np.asarray(b.offset, dtype=float) if b.offset else np.zeros(grid.dim)
    prof = plane_field(b.q0, nu, off, grid, q_volume=cfg.force.q0)

    def info(sol):
        return {"oracle": {"plane_J": prof.J_exact, "max_error": float(np.abs(sol.u.values - prof.field.values).max())}}

    def gates(sol):
        err = float(np.abs(sol.u.values - prof.field.values).max())
        h = grid.hmin
        return [_gate("oracle_plane", err <= 5 * h, err, 5 * h, "max nodal error")]

    return info, gates


def run_oracle(cfg: RunConfig) -> int:
    spec = _validated_model(cfg)
    info, gates = _oracle_hooks(cfg, spec)
    sol, _, g = _solve_and_report(cfg, spec, _prepare_dir(cfg), extra_gates=gates, energy_extra=info)
    return _status(sol.converged, g)


RUNNERS = {"solve": run_solve, "diagnose": run_diagnose, "sweep": run_sweep, "oracle": run_oracle}


def run(cfg: RunConfig) -> int:
    """Execute a parsed configuration; returns the exit code."""
    (Path(cfg.output.dir) / cfg.output.run_id).mkdir(parents=True, exist_ok=True)
    (Path(cfg.output.dir) / cfg.output.run_id / "config.ini").write_text(serialize(cfg))
    return RUNNERS[cfg.mode](cfg)


# ----------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="freebound", description=__doc__.splitlines()[0])
    p.add_argument("--config", required=True, help="path to the run configuration")
    p.add_argument("--seed", type=int, default=None, help="override [diagnostics] seed")
    p.add_argument("--mode", choices=sorted(RUNNERS), default=None, help="override the configured mode")
    p.add_argument("--quiet", action="store_true", help="only report errors")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO, format="%(levelname)s %(message)s")
    try:
        text = Path(args.config).read_text()
        cfg = parse_config(text)
        if args.seed is not None:
            cfg = replace(cfg, diagnostics=replace(cfg.diagnostics, seed=args.seed))
        if args.mode is not None:
            cfg = replace(cfg, mode=args.mode)
            from .config import validate_config

            errs = validate_config(cfg)
            if errs:
                raise ConfigError(errs)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"configuration error:\n{exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        code = run(cfg)
    except (ModelError, SolverError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not args.quiet:
        print(f"exit {code}: {Path(cfg.output.dir) / cfg.output.run_id}")
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
