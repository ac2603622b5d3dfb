"""Run configuration: a line-oriented ``key = value`` format with ``[section]`` headers.

Keys before the first header belong to the top level (``mode``).  Vectors
are comma separated, ``none`` clears an optional value, ``#`` starts a
comment.  Every section maps onto a dataclass; unknown keys, duplicates and
type mismatches are reported together with their line numbers.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
import math
import typing

import numpy as np

from .minimizer import SEED_MODES, SolverConfig
from .model import (
    FORCE_KINDS,
    NONLINEAR_KINDS,
    OBSTACLE_KINDS,
    FACES,
    ForceField,
    ModelSpec,
    NonlinearTerm,
    Obstacle,
    make_model,
    plane_trace,
    trace_boundary,
)
from .grid import GridSpec, build_grid

MODES = ("solve", "diagnose", "sweep", "oracle")
BOUNDARY_KINDS = ("zero", "constant", "plane")
GATES = ("nonnegativity", "supersolution", "audit", "weiss", "density", "slope")
FORMATS = ("csv", "json")


class ConfigError(ValueError):
    """Raised with every problem found; ``errors`` holds ``(line, message)`` pairs."""

    def __init__(self, errors: list[tuple[int, str]]):
        self.errors = errors
        super().__init__("\n".join(f"line {ln}: {msg}" if ln else msg for ln, msg in errors))


@dataclass
class GridSection:
    dim: int = 0
    origin: tuple[float, ...] = ()
    extent: tuple[float, ...] = ()
    n: tuple[int, ...] = ()
    sweep: tuple[int, ...] = ()  # node counts per axis for sweep mode


@dataclass
class NonlinearSection:
    kind: str = "zero"
    kappa: float = 0.0
    lam: float = 0.0
    F0: float = 0.0
    knots: tuple[float, ...] = ()
    values: tuple[float, ...] = ()


@dataclass
class ForceSection:
    kind: str = "constant"
    q0: float = 1.0
    slope: tuple[float, ...] = ()
    amplitude: float = 0.0
    exponent: float = 1.0
    center: tuple[float, ...] = ()


@dataclass
class ObstacleSection:
    kind: str = "paraboloid"
    M0: float = 10.0
    curvature: float | None = None  # None: the kappa of the nonlinear term
    center: tuple[float, ...] = ()


@dataclass
class BoundarySection:
    faces: tuple[str, ...] = ("all",)
    kind: str = "zero"
    value: float = 0.0
    q0: float = 1.0
    nu: tuple[float, ...] = ()
    offset: tuple[float, ...] = ()


@dataclass
class SolverSection:
    eps_start: float = 8.0
    eps_stop: float = 0.5
    eps_factor: float = 0.7
    max_outer: int = 20
    max_inner: int = 5000
    armijo: float = 1e-4
    grad_tol: float | None = None
    fb_level: float = 1e-8
    seed_mode: str = "harmonic"
    polish: bool = True


@dataclass
class DiagnosticsSection:
    points: tuple[float, ...] = ()  # flat list of coordinates; empty means sample the contour
    count: int = 10
    seed: int = 0
    rmin: float | None = None  # None: 6h
    rmax: float = 0.25
    per_octave: int = 4
    radii: tuple[float, ...] = ()  # explicit Weiss radii, overrides the dyadic range
    gates: tuple[str, ...] = ("nonnegativity", "supersolution", "audit", "weiss", "density")
    weiss_tol: float = 1e-2
    supersolution_tol: float = 1e-6
    audit_trials: int = 200
    audit_tol: float = 1e-6
    delta_reg: float = 0.05
    slope_tol: float = 0.1
    n_fb: int = 10000
    oracle_J_tol: float = 0.02
    oracle_fb_tol: float = 0.01
    solution: str = ""  # solution.json to read in diagnose mode


@dataclass
class OutputSection:
    dir: str = "runs"
    run_id: str = "run"
    formats: tuple[str, ...] = ("csv", "json")


SECTIONS = {
    "grid": GridSection,
    "nonlinear": NonlinearSection,
    "force": ForceSection,
    "obstacle": ObstacleSection,
    "boundary": BoundarySection,
    "solver": SolverSection,
    "diagnostics": DiagnosticsSection,
    "output": OutputSection,
}
REQUIRED = {"grid": ("dim", "origin", "extent", "n")}


@dataclass
class RunConfig:
    mode: str = "solve"
    grid: GridSection = field(default_factory=GridSection)
    nonlinear: NonlinearSection = field(default_factory=NonlinearSection)
    force: ForceSection = field(default_factory=ForceSection)
    obstacle: ObstacleSection = field(default_factory=ObstacleSection)
    boundary: BoundarySection = field(default_factory=BoundarySection)
    solver: SolverSection = field(default_factory=SolverSection)
    diagnostics: DiagnosticsSection = field(default_factory=DiagnosticsSection)
    output: OutputSection = field(default_factory=OutputSection)

    # ---- model construction

    def grid_spec(self, n: tuple[int, ...] | None = None) -> GridSpec:
        g = self.grid
        return GridSpec(g.dim, g.origin, g.extent, n if n is not None else g.n)

    def model(self, n: tuple[int, ...] | None = None) -> ModelSpec:
        grid = build_grid(self.grid_spec(n))
        nl = self.nonlinear
        F = NonlinearTerm(nl.kind, nl.kappa, nl.lam, nl.F0, nl.knots, nl.values)
        fc = self.force
        Q = ForceField(fc.kind, fc.q0, fc.slope, fc.amplitude, fc.exponent, fc.center)
        ob = self.obstacle
        curv = ob.curvature if ob.curvature is not None else (nl.kappa if nl.kind == "quadratic_affine" else 0.0)
        psi = Obstacle(ob.kind, ob.M0, curv, ob.center)
        b = self.boundary
        faces = "all" if b.faces == ("all",) else b.faces
        if b.kind == "plane":
            func = plane_trace(b.q0, b.nu or None, b.offset or None)
        else:
            value = b.value if b.kind == "constant" else 0.0
            func = lambda x: np.full(x.shape[:-1], value)  # noqa: E731
        bc = trace_boundary(grid, faces, func)
        return make_model(grid, F=F, Q=Q, psi=psi, bc=bc)

    def solver_config(self) -> SolverConfig:
        s = self.solver
        return SolverConfig(
            eps_start=s.eps_start,
            eps_stop=s.eps_stop,
            eps_factor=s.eps_factor,
            max_outer=s.max_outer,
            max_inner=s.max_inner,
            armijo=s.armijo,
            grad_tol=s.grad_tol,
            fb_level=s.fb_level,
            seed_mode=s.seed_mode,
            polish=s.polish,
        )

    def explicit_points(self) -> np.ndarray | None:
        p = self.diagnostics.points
        if not p:
            return None
        return np.asarray(p, dtype=float).reshape(-1, self.grid.dim)


# ----------------------------------------------------------------------------
# value parsing


def _strip_comment(line: str) -> str:
    i = line.find("#")
    return line if i < 0 else line[:i]


def _parse_scalar(kind, text: str):
    t = text.strip()
    if kind is bool:
        low = t.lower()
        if low not in ("true", "false"):
            raise ValueError(f"expected true or false, got {t!r}")
        return low == "true"
    if kind is int:
        try:
            return int(t)
        except ValueError:
            raise ValueError(f"expected an integer, got {t!r}") from None
    if kind is float:
        try:
            v = float(t)
        except ValueError:
            raise ValueError(f"expected a number, got {t!r}") from None
        if not math.isfinite(v):
            raise ValueError(f"expected a finite number, got {t!r}")
        return v
    if not t:
        raise ValueError("empty value")
    return t


def _coerce(hint, text: str):
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin is tuple:
        item = args[0]
        t = text.strip()
        if not t:
            return ()
        return tuple(_parse_scalar(item, part) for part in t.split(","))
    if origin in (typing.Union, getattr(__import__("types"), "UnionType", None)):
        inner = [a for a in args if a is not type(None)][0]
        if text.strip().lower() == "none":
            return None
        return _parse_scalar(inner, text)
    if hint is str:
        return text.strip()
    return _parse_scalar(hint, text)


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    return str(value)


_HINTS = {name: typing.get_type_hints(cls) for name, cls in SECTIONS.items()}


# ----------------------------------------------------------------------------
# parse / serialize


def parse_config(text: str) -> RunConfig:
    errors: list[tuple[int, str]] = []
    values: dict[str, dict[str, object]] = {name: {} for name in SECTIONS}
    seen: dict[tuple[str, str], int] = {}
    top: dict[str, object] = {}
    section = ""
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                errors.append((ln, f"malformed section header {line!r}"))
                continue
            name = line[1:-1].strip()
            if name not in SECTIONS:
                errors.append((ln, f"unknown section [{name}]"))
                section = "?"
                continue
            section = name
            continue
        if "=" not in line:
            errors.append((ln, f"expected 'key = value', got {line!r}"))
            continue
        key, _, val = line.partition("=")
        key = key.strip()
        if section == "?":
            continue
        where = f"[{section}]" if section else "top level"
        if (section, key) in seen:
            errors.append((ln, f"duplicate key {key!r} in {where} (first set on line {seen[section, key]})"))
            continue
        seen[section, key] = ln
        if not section:
            if key != "mode":
                errors.append((ln, f"unknown key {key!r} at top level"))
                continue
            top[key] = (ln, val.strip())
            continue
        hints = _HINTS[section]
        if key not in hints:
            errors.append((ln, f"unknown key {key!r} in {where}"))
            continue
        try:
            values[section][key] = (ln, _coerce(hints[key], val))
        except ValueError as exc:
            errors.append((ln, f"{where} {key}: {exc}"))

    for sec, keys in REQUIRED.items():
        for k in keys:
            if k not in values[sec]:
                errors.append((0, f"missing required key {k!r} in [{sec}]"))
    if errors:
        raise ConfigError(errors)

    sections = {}
    lines = {}
    for name, cls in SECTIONS.items():
        kwargs = {k: v for k, (_, v) in values[name].items()}
        lines[name] = {k: ln for k, (ln, _) in values[name].items()}
        sections[name] = cls(**kwargs)
    mode = "solve"
    mode_line = 0
    if "mode" in top:
        mode_line, mode = top["mode"]
    cfg = RunConfig(mode=mode, **sections)
    # broadcast a single node count over every axis
    g = cfg.grid
    if g.dim in (1, 2, 3):
        cfg.grid = replace(
            g,
            origin=_broadcast(g.origin, g.dim),
            extent=_broadcast(g.extent, g.dim),
            n=_broadcast(g.n, g.dim),
        )
    errs = validate_config(cfg, lines, mode_line)
    if errs:
        raise ConfigError(errs)
    return cfg


def _broadcast(vec, dim):
    return tuple(vec) * dim if len(vec) == 1 else tuple(vec)


def validate_config(cfg: RunConfig, lines: dict | None = None, mode_line: int = 0) -> list[tuple[int, str]]:
    """Semantic checks; returns ``(line, message)`` pairs (line 0 when unknown)."""
    lines = lines or {}

    def at(sec, key):
        return lines.get(sec, {}).get(key, 0)

    errs = []
    if cfg.mode not in MODES:
        errs.append((mode_line, f"mode must be one of {', '.join(MODES)}"))
    g = cfg.grid
    if g.dim not in (1, 2, 3):
        errs.append((at("grid", "dim"), "dim must be 1, 2 or 3"))
    else:
        for key in ("origin", "extent", "n"):
            if len(getattr(g, key)) != g.dim:
                errs.append((at("grid", key), f"{key} needs {g.dim} components"))
        if any(e <= 0 for e in g.extent):
            errs.append((at("grid", "extent"), "extent must be positive"))
        if any(k < 9 for k in g.n):
            errs.append((at("grid", "n"), "need at least 9 nodes per axis"))
        if any(k < 9 for k in g.sweep):
            errs.append((at("grid", "sweep"), "sweep node counts must be at least 9"))
    nl = cfg.nonlinear
    if nl.kind not in NONLINEAR_KINDS:
        errs.append((at("nonlinear", "kind"), f"nonlinear kind must be one of {', '.join(NONLINEAR_KINDS)}"))
    if nl.kappa < 0 or nl.lam < 0 or nl.F0 < 0:
        errs.append((at("nonlinear", "kappa"), "kappa, lam and F0 must be nonnegative"))
    if nl.kind == "quadratic_affine":
        if nl.lam > nl.F0 / 2:
            errs.append((at("nonlinear", "lam"), f"lam = {nl.lam:g} exceeds F0/2 = {nl.F0 / 2:g}"))
        if 2 * nl.kappa > nl.F0:
            errs.append((at("nonlinear", "kappa"), f"2*kappa = {2 * nl.kappa:g} exceeds F0 = {nl.F0:g}"))
    if nl.kind == "tabulated" and (len(nl.knots) < 4 or len(nl.knots) != len(nl.values)):
        errs.append((at("nonlinear", "knots"), "tabulated term needs >= 4 knots with matching values"))
    if cfg.force.kind not in FORCE_KINDS:
        errs.append((at("force", "kind"), f"force kind must be one of {', '.join(FORCE_KINDS)}"))
    if cfg.force.kind == "holder_radial" and not 0 < cfg.force.exponent <= 1:
        errs.append((at("force", "exponent"), "Hölder exponent must lie in (0, 1]"))
    if cfg.obstacle.kind not in OBSTACLE_KINDS:
        errs.append((at("obstacle", "kind"), f"obstacle kind must be one of {', '.join(OBSTACLE_KINDS)}"))
    if cfg.obstacle.M0 <= 0:
        errs.append((at("obstacle", "M0"), "M0 must be positive"))
    b = cfg.boundary
    if b.kind not in BOUNDARY_KINDS:
        errs.append((at("boundary", "kind"), f"boundary kind must be one of {', '.join(BOUNDARY_KINDS)}"))
    if b.faces != ("all",):
        bad = [f for f in b.faces if f not in FACES[: 2 * max(g.dim, 1)]]
        if bad:
            errs.append((at("boundary", "faces"), f"unknown faces {', '.join(bad)}"))
    if b.value < 0:
        errs.append((at("boundary", "value"), "boundary value must be nonnegative"))
    s = cfg.solver
    if s.seed_mode not in SEED_MODES or s.seed_mode == "custom":
        errs.append((at("solver", "seed_mode"), "seed_mode must be harmonic or obstacle"))
    try:
        cfg.solver_config()
    except ValueError as exc:
        errs.append((0, f"[solver] {exc}"))
    d = cfg.diagnostics
    bad = [x for x in d.gates if x not in GATES]
    if bad:
        errs.append((at("diagnostics", "gates"), f"unknown gates {', '.join(bad)}"))
    if d.points and g.dim in (1, 2, 3) and len(d.points) % g.dim:
        errs.append((at("diagnostics", "points"), f"points need a multiple of {g.dim} coordinates"))
    if d.count < 1 or d.per_octave < 1 or d.audit_trials < 0 or d.n_fb < 1:
        errs.append((at("diagnostics", "count"), "count, per_octave and n_fb must be positive; audit_trials nonnegative"))
    if d.rmax <= 0 or (d.rmin is not None and not 0 < d.rmin <= d.rmax):
        errs.append((at("diagnostics", "rmax"), "need 0 < rmin <= rmax"))
    if g.dim in (1, 2, 3) and len(g.extent) == g.dim:
        half = 0.5 * min(g.extent)
        rmax = max(d.radii) if d.radii else d.rmax
        if rmax >= half:
            errs.append((at("diagnostics", "rmax"), f"largest radius {rmax:g} does not fit in the box (half-width {half:g})"))
    if any(r <= 0 for r in d.radii) or list(d.radii) != sorted(set(d.radii)):
        errs.append((at("diagnostics", "radii"), "radii must be positive and strictly increasing"))
    bad = [x for x in cfg.output.formats if x not in FORMATS]
    if bad:
        errs.append((at("output", "formats"), f"unknown formats {', '.join(bad)}"))
    if not cfg.output.run_id or "/" in cfg.output.run_id:
        errs.append((at("output", "run_id"), "run_id must be a plain name"))
    if cfg.mode == "oracle" and g.dim in (1, 2, 3):
        if g.dim == 1 and not (b.kind == "constant" and b.faces == ("xmin",)):
            errs.append((at("boundary", "kind"), "1D oracle needs a constant value on the xmin face"))
        if g.dim == 1 and nl.kind == "tabulated":
            errs.append((at("nonlinear", "kind"), "1D oracle needs a linear f"))
        if g.dim > 1 and (b.kind != "plane" or nl.kind != "zero" or cfg.force.kind != "constant"):
            errs.append((at("boundary", "kind"), "plane oracle needs plane boundary data, F = 0 and constant Q"))
    if cfg.mode == "sweep" and not g.sweep:
        errs.append((at("grid", "sweep"), "sweep mode needs [grid] sweep"))
    if cfg.mode == "diagnose" and not d.solution:
        errs.append((at("diagnostics", "solution"), "diagnose mode needs [diagnostics] solution"))
    return errs


def serialize(cfg: RunConfig) -> str:
    """Canonical text form; ``parse_config(serialize(cfg)) == cfg``."""
    out = [f"mode = {cfg.mode}", ""]
    for name in SECTIONS:
        sec = getattr(cfg, name)
        out.append(f"[{name}]")
        for f in fields(sec):
            out.append(f"{f.name} = {_format(getattr(sec, f.name))}")
        out.append("")
    return "\n".join(out)
