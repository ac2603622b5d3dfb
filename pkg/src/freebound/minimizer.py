"""Discrete minimization of J over the admissible class (u = u0 on S, 0 <= u <= Psi).

The indicator is replaced by the ramp ``chi_eps`` and ``eps`` is annealed
from ``8h`` down to ``h/2``.  On ``u >= 0`` the ramp is concave, so each inner
step linearizes it at the current iterate and solves the remaining convex,
bound-constrained quadratic model exactly (primal-dual active set).  The
model solution gives a descent direction; an Armijo backtracking line search
on the smoothed energy accepts the step (the full step always passes for
quadratic F, since the model majorizes the energy).
"""

from __future__ import annotations

from dataclasses import dataclass, field
import logging

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .energy import (
    FB_LEVEL,
    EnergyBreakdown,
    chi_eps,
    dchi_eps,
    positivity_threshold,
    stiffness,
    total_energy,
)
from .grid import ScalarField
from .levelset import FreeBoundary, extract_free_boundary
from .model import ModelSpec

__all__ = [
    "SolverConfig",
    "Solution",
    "SolverError",
    "solve",
    "seed_field",
    "AuditReport",
    "competitor_audit",
    "FreeBoundary",
    "extract_free_boundary",
]

log = logging.getLogger(__name__)

SEED_MODES = ("harmonic", "obstacle", "custom")


class SolverError(ValueError):
    pass


@dataclass
class SolverConfig:
    eps_start: float = 8.0  # in units of h
    eps_stop: float = 0.5
    eps_factor: float = 0.7
    max_outer: int = 20
    max_inner: int = 5000
    armijo: float = 1e-4
    grad_tol: float | None = None  # absolute; None means 1e-6 * scale
    fb_level: float = FB_LEVEL
    seed_mode: str = "harmonic"
    polish: bool = True  # front retraction after the last stage
    initial: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.seed_mode not in SEED_MODES:
            raise SolverError(f"unknown seed mode {self.seed_mode!r}")
        if not 0 < self.eps_factor < 1:
            raise SolverError("eps_factor must lie in (0, 1)")
        if not 0 < self.eps_stop < self.eps_start:
            raise SolverError("need 0 < eps_stop < eps_start")
        if self.max_outer < 1 or self.max_inner < 1:
            raise SolverError("iteration budgets must be positive")
        if not 0 < self.armijo < 0.5:
            raise SolverError("Armijo constant must lie in (0, 1/2)")
        if self.grad_tol is not None and self.grad_tol <= 0:
            raise SolverError("grad_tol must be positive")
        if self.fb_level <= 0:
            raise SolverError("fb_level must be positive")
        if self.seed_mode == "custom" and self.initial is None:
            raise SolverError("custom seed needs an initial field")

    def eps_schedule(self, h: float) -> list[float]:
        """Geometric sequence from eps_start*h while above eps_stop*h, closed by eps_stop*h."""
        out = []
        e = self.eps_start * h
        while e > self.eps_stop * h * (1 + 1e-12) and len(out) < self.max_outer - 1:
            out.append(e)
            e *= self.eps_factor
        out.append(self.eps_stop * h)
        return out

    def tolerance(self, spec: ModelSpec) -> float:
        return self.grad_tol if self.grad_tol is not None else 1e-6 * spec.scale


@dataclass
class Solution:
    u: ScalarField
    energy: EnergyBreakdown
    iterations: int
    grad_norm: float
    fb: FreeBoundary
    converged: bool = True
    eps: float = 0.0  # final smoothing width
    eps_history: list[float] = field(default_factory=list)
    sharp_history: list[float] = field(default_factory=list)  # sharp J at the end of each stage
    smoothed_history: list[list[float]] = field(default_factory=list)  # per stage: smoothed energy after each accepted step
    stage_iterations: list[int] = field(default_factory=list)

    @property
    def J(self) -> float:
        return self.energy.total


def _smoothed(values, spec: ModelSpec, eps: float) -> float:
    K = stiffness(spec.grid)
    v = values.ravel()
    m = spec.grid.node_mass
    return float(v @ (K @ v) + np.sum(m * (spec.F.F(values) + spec.Q_nodes**2 * chi_eps(values, eps))))


def _gradient(values, spec: ModelSpec, eps: float) -> np.ndarray:
    K = stiffness(spec.grid)
    m = spec.grid.node_mass
    g = 2.0 * (K @ values.ravel()).reshape(values.shape)
    return g + m * (spec.F.dF(values) + spec.Q_nodes**2 * dchi_eps(values, eps))


def projected_gradient(values, spec: ModelSpec, eps: float) -> np.ndarray:
    """Mass-normalized gradient with components pointing out of the box removed."""
    g = _gradient(values, spec, eps) / spec.grid.node_mass
    psi = spec.psi_nodes
    g = np.where((values <= 0.0) & (g > 0), 0.0, g)
    g = np.where((values >= psi) & (g < 0), 0.0, g)
    g[spec.bc.mask] = 0.0
    return g


def _bounds(spec: ModelSpec):
    lo = np.zeros(spec.grid.shape)
    hi = spec.psi_nodes.copy()
    return lo, hi


def _project(values, spec: ModelSpec) -> np.ndarray:
    lo, hi = _bounds(spec)
    out = np.minimum(np.maximum(values, lo), hi)
    out[spec.bc.mask] = spec.bc.values[spec.bc.mask]
    return out


def seed_field(spec: ModelSpec, cfg: SolverConfig | None = None) -> np.ndarray:
    cfg = cfg or SolverConfig()
    if cfg.seed_mode == "obstacle":
        return _project(spec.psi_nodes.copy(), spec)
    if cfg.seed_mode == "custom":
        init = np.asarray(cfg.initial, dtype=float)
        if init.shape != tuple(spec.grid.shape):
            raise SolverError("initial field does not match the grid")
        return _project(init, spec)
    # Delta v + f(v) = 0 with f linearized at 0; v = u0 on S, v = 0 on the rest of the box boundary
    grid = spec.grid
    fixed = (spec.bc.mask | grid.boundary_mask).ravel()
    vb = np.where(spec.bc.mask, spec.bc.values, 0.0).ravel()
    free = ~fixed
    v = vb.copy()
    if free.any():
        K = stiffness(grid)
        m = grid.node_mass.ravel()
        d2 = float(spec.F.d2F(0.0))
        d1 = float(spec.F.dF(0.0))
        A = (2.0 * K[free][:, free] + sp.diags(m[free] * d2)).tocsc()
        b = -2.0 * (K[free][:, fixed] @ vb[fixed]) - m[free] * d1
        v[free] = spla.spsolve(A, b)
    return _project(v.reshape(grid.shape), spec)


def _box_qp(A, b, lo, hi, x0, active_lo=None, active_hi=None, max_iter=200):
    """min 1/2 x'Ax - b'x on lo <= x <= hi by the primal-dual active-set method."""
    n = b.size
    x = np.clip(x0, lo, hi)
    c = float(np.mean(A.diagonal()))
    if active_lo is None:
        g = A @ x - b
        active_lo = (g + c * (lo - x)) > 0
        active_hi = ((g + c * (hi - x)) < 0) & ~active_lo
    for _ in range(max_iter):
        inact = ~(active_lo | active_hi)
        x = np.where(active_lo, lo, np.where(active_hi, hi, x))
        if inact.any():
            fixed = ~inact
            rhs = b[inact] - A[inact][:, fixed] @ x[fixed]
            x[inact] = spla.spsolve(A[inact][:, inact].tocsc(), rhs)
        g = A @ x - b
        new_lo = (g + c * (lo - x)) > 0
        new_hi = ((g + c * (hi - x)) < 0) & ~new_lo
        if np.array_equal(new_lo, active_lo) and np.array_equal(new_hi, active_hi):
            return np.clip(x, lo, hi), active_lo, active_hi, True
        active_lo, active_hi = new_lo, new_hi
    return np.clip(x, lo, hi), active_lo, active_hi, False


class _Stage:
    """Reduced quadratic model on the non-Dirichlet nodes."""

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        grid = spec.grid
        self.free = ~spec.bc.mask.ravel()
        K = stiffness(grid).tocsr()
        self.K_ff = K[self.free][:, self.free]
        self.K_fs = K[self.free][:, ~self.free]
        self.us = spec.bc.values.ravel()[~self.free]
        self.m = grid.node_mass.ravel()[self.free]
        self.q2 = (spec.Q_nodes**2).ravel()[self.free]
        lo, hi = _bounds(spec)
        self.lo = lo.ravel()[self.free]
        self.hi = hi.ravel()[self.free]
        self.sets = (None, None)

    def direction(self, values: np.ndarray, eps: float) -> np.ndarray:
        F = self.spec.F
        x = values.ravel()[self.free]
        d2 = F.d2F(x)
        A = (2.0 * self.K_ff + sp.diags(self.m * d2)).tocsr()
        slope = np.where(x < eps, 1.0 / eps, 0.0)  # supergradient of the concave ramp
        b = -2.0 * (self.K_fs @ self.us) - self.m * (F.dF(x) - d2 * x + self.q2 * slope)
        y, alo, ahi, ok = _box_qp(A, b, self.lo, self.hi, x, *self.sets)
        self.sets = (alo, ahi)
        if not ok:
            log.debug("active-set iteration hit its cap")
        d = np.zeros(values.size)
        d[self.free] = y - x
        return d.reshape(values.shape)


def _descend(u, spec: ModelSpec, stage: _Stage, eps: float, cfg: SolverConfig, tol: float, history: list):
    """Inner loop at fixed eps; returns (u, E, steps, projected-gradient norm)."""
    h = spec.grid.hmin
    E = _smoothed(u, spec, eps)
    n = 0
    gnorm = np.inf
    while True:
        pg = projected_gradient(u, spec, eps)
        gnorm = float(np.max(np.abs(pg))) if pg.size else 0.0
        if gnorm <= tol or n >= cfg.max_inner:
            break
        d = stage.direction(u, eps)
        g = _gradient(u, spec, eps)
        slope = float(np.sum(g * d))
        if not slope < 0:
            # model step stalled; fall back to a projected gradient step
            d = _project(u - pg * h * h / 4.0, spec) - u
            slope = float(np.sum(g * d))
            if not slope < 0:
                break
        t = 1.0
        for _ in range(40):
            trial = _project(u + t * d, spec)
            E_new = _smoothed(trial, spec, eps)
            if E_new <= E + cfg.armijo * t * slope:
                break
            t *= 0.5
        else:
            break
        u, E = trial, E_new
        history.append(E)
        n += 1
    return u, E, n, gnorm


def _front(u, spec: ModelSpec) -> np.ndarray:
    """Positive nodes with a zero axis neighbor."""
    pos = u > 0
    zero_nb = np.zeros_like(pos)
    for ax in range(u.ndim):
        for step in (1, -1):
            nb = np.roll(~pos, step, axis=ax)
            sl = [slice(None)] * u.ndim
            sl[ax] = 0 if step == 1 else -1
            nb[tuple(sl)] = False
            zero_nb |= nb
    return pos & zero_nb & ~spec.bc.mask


def _polish(u, E, spec, stage, eps, cfg, tol, history, block=8, max_moves=200):
    """Retract the positivity front where that lowers the smoothed energy.

    Below eps ~ h the ramp no longer spans a cell and the front is pinned
    wherever the coarser stages left it, displaced outward by the smoothing.
    Each move zeroes the front (globally, then block by block) and re-descends.
    """
    moves = 0
    steps = 0
    gnorm = float(np.max(np.abs(projected_gradient(u, spec, eps))))
    while moves < max_moves:
        front = _front(u, spec)
        if not front.any():
            break
        idx = np.argwhere(front)
        keys = [tuple(k) for k in (idx // block)]
        groups = [front]
        if len(set(keys)) > 1:
            for key in sorted(set(keys)):
                sel = np.array([k == key for k in keys])
                mask = np.zeros_like(front)
                mask[tuple(idx[sel].T)] = True
                groups.append(mask)
        accepted = False
        for mask in groups:
            trial = np.where(mask, 0.0, u)
            trial_hist: list = []
            v, Ev, n, gv = _descend(trial, spec, stage, eps, cfg, tol, trial_hist)
            steps += n
            if Ev < E - 1e-12 * spec.scale and gv <= max(tol, gnorm):
                u, E, gnorm = v, Ev, gv
                history.append(E)
                moves += 1
                accepted = True
                break
        if not accepted:
            break
    return u, E, steps, gnorm, moves


def solve(spec: ModelSpec, cfg: SolverConfig | None = None) -> Solution:
    """Annealed projected descent; returns a flagged partial solution if the budget runs out."""
    cfg = cfg or SolverConfig()
    bc = spec.bc
    psi = spec.psi_nodes
    if not bc.mask.any():
        raise SolverError("Dirichlet set S is empty")
    u0 = bc.values[bc.mask]
    if np.any(u0 < 0) or np.any(u0 > psi[bc.mask] + 1e-12):
        raise SolverError("boundary data violate 0 <= u0 <= Psi")

    tol = cfg.tolerance(spec)
    u = seed_field(spec, cfg)
    stage = _Stage(spec)
    schedule = cfg.eps_schedule(spec.grid.hmin)
    smoothed_hist, sharp_hist, stage_its = [], [], []
    iters = 0
    gnorm = np.inf
    for k, eps in enumerate(schedule):
        hist = [_smoothed(u, spec, eps)]
        u, E, n, gnorm = _descend(u, spec, stage, eps, cfg, tol, hist)
        if k == len(schedule) - 1 and cfg.polish:
            u, E, n2, gnorm, moves = _polish(u, E, spec, stage, eps, cfg, tol, hist)
            n += n2
            log.debug("polish: %d front moves", moves)
        iters += n
        stage_its.append(n)
        smoothed_hist.append(hist)
        sharp_hist.append(total_energy(ScalarField(spec.grid, u), spec, None, cfg.fb_level).total)
        log.debug("eps=%.3g steps=%d |pg|=%.2e", eps, n, gnorm)
    field_u = ScalarField(spec.grid, u)
    energy = total_energy(field_u, spec, None, cfg.fb_level)
    fb = extract_free_boundary(field_u, positivity_threshold(u, cfg.fb_level))
    return Solution(
        u=field_u,
        energy=energy,
        iterations=iters,
        grad_norm=gnorm,
        fb=fb,
        converged=gnorm <= tol,
        eps=schedule[-1],
        eps_history=schedule,
        sharp_history=sharp_hist,
        smoothed_history=smoothed_hist,
        stage_iterations=stage_its,
    )


@dataclass
class AuditReport:
    trials: int
    violations: int
    worst_margin: float  # min over trials of J(v) - J(u); negative means a better competitor was found
    tol: float
    kinds: list[str] = field(default_factory=list)
    margins: list[float] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "violations": self.violations,
            "worst_margin": self.worst_margin,
            "tol": self.tol,
            "passed": self.passed,
        }


def competitor_audit(sol: Solution, spec: ModelSpec, trials: int, seed: int = 0, rel_tol: float = 1e-6) -> AuditReport:
    """Compare the solution against random admissible competitors in the smoothed energy it minimizes."""
    eps = sol.eps if sol.eps > 0 else 0.5 * spec.grid.hmin
    u = sol.u.values
    J0 = _smoothed(u, spec, eps)
    tol = rel_tol * max(abs(J0), 1e-300)
    if trials <= 0:
        return AuditReport(0, 0, float("inf"), tol)
    rng = np.random.default_rng(seed)
    grid = spec.grid
    pts = grid.points
    umax = max(float(u.max()), 1e-12)
    ext = float(np.min(grid.upper - grid.origin))
    g = _gradient(u, spec, eps) / grid.node_mass
    g[spec.bc.mask] = 0.0
    gmax = float(np.max(np.abs(g)))
    margins, kinds = [], []
    for _ in range(trials):
        kind = rng.choice(["bump", "truncate", "scale", "descent"])
        if kind == "bump":
            c = grid.origin + rng.random(grid.dim) * (grid.upper - grid.origin)
            w = rng.uniform(2 * grid.hmin, 0.2 * ext)
            amp = rng.uniform(-0.2, 0.2) * umax
            bump = amp * np.exp(-np.sum((pts - c) ** 2, axis=-1) / (2 * w * w))
            v = u + bump
        elif kind == "truncate":
            t = rng.uniform(0.0, 0.5) * umax
            v = np.maximum(u - t, 0.0) if rng.random() < 0.5 else np.minimum(u, t)
        elif kind == "scale":
            v = u * rng.uniform(0.9, 1.1)
        else:
            if gmax == 0:
                v = u.copy()
            else:
                step = rng.uniform(0.01, 1.0) * grid.hmin**2 / 4.0
                v = u - step * g
        v = _project(v, spec)
        margin = _smoothed(v, spec, eps) - J0
        margins.append(float(margin))
        kinds.append(str(kind))
    margins_arr = np.asarray(margins)
    return AuditReport(
        trials=trials,
        violations=int(np.sum(margins_arr < -tol)),
        worst_margin=float(margins_arr.min()),
        tol=tol,
        kinds=kinds,
        margins=margins,
    )
