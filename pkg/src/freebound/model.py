"""Problem data: the convex term F, the force Q, the obstacle Psi and Dirichlet data.

The nonlinear term enters the functional as ``F(u)``; the interior equation
is ``-Laplace(u) = f(u)`` with ``f = -F'/2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicSpline

from .grid import Grid, GridSpec, build_grid, laplacian, ScalarField

NONLINEAR_KINDS = ("zero", "quadratic_affine", "tabulated")
FORCE_KINDS = ("constant", "affine", "holder_radial")
OBSTACLE_KINDS = ("constant", "paraboloid")


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class NonlinearTerm:
    """``F(t) = -2*kappa*t + lam*t**2`` (quadratic_affine), zero, or a tabulated convex profile."""

    kind: str = "zero"
    kappa: float = 0.0
    lam: float = 0.0
    F0: float = 0.0
    knots: tuple[float, ...] = ()
    values: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in NONLINEAR_KINDS:
            raise ModelError(f"unknown nonlinear kind {self.kind!r}")
        if self.kind == "tabulated":
            if len(self.knots) < 4 or len(self.knots) != len(self.values):
                raise ModelError("tabulated term needs >= 4 knots with matching values")
            object.__setattr__(self, "knots", tuple(float(k) for k in self.knots))
            object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    @cached_property
    def _spline(self):
        spl = CubicSpline(self.knots, self.values, bc_type="natural", extrapolate=True)
        shift = float(spl(0.0))
        return spl, shift

    def F(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(t)
        if self.kind == "quadratic_affine":
            return -2.0 * self.kappa * t + self.lam * t * t
        spl, shift = self._spline
        return spl(t) - shift

    def dF(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(t)
        if self.kind == "quadratic_affine":
            return -2.0 * self.kappa + 2.0 * self.lam * t
        return self._spline[0](t, 1)

    def d2F(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(t)
        if self.kind == "quadratic_affine":
            return np.full_like(t, 2.0 * self.lam)
        return self._spline[0](t, 2)

    def f(self, t):
        return -0.5 * self.dF(t)

    @property
    def is_linear_f(self) -> bool:
        return self.kind != "tabulated"


def eval_F(term: NonlinearTerm, t) -> float:
    return term.F(t)[()]


def eval_f(term: NonlinearTerm, t) -> float:
    return term.f(t)[()]


@dataclass(frozen=True)
class ForceField:
    kind: str = "constant"
    q0: float = 1.0
    slope: tuple[float, ...] = ()
    amplitude: float = 0.0
    exponent: float = 1.0
    center: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in FORCE_KINDS:
            raise ModelError(f"unknown force kind {self.kind!r}")
        if self.kind == "holder_radial" and not 0 < self.exponent <= 1:
            raise ModelError("Hölder exponent must lie in (0, 1]")

    def _center(self, dim):
        c = np.zeros(dim)
        if self.center:
            c[:] = np.asarray(self.center, dtype=float)
        return c

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        dim = x.shape[-1]
        if self.kind == "constant":
            return np.full(x.shape[:-1], self.q0)
        dx = x - self._center(dim)
        if self.kind == "affine":
            slope = np.zeros(dim)
            if self.slope:
                slope[:] = np.asarray(self.slope, dtype=float)
            return self.q0 + dx @ slope
        return self.q0 + self.amplitude * np.linalg.norm(dx, axis=-1) ** self.exponent

    @property
    def holder_seminorm(self) -> float:
        """[Q]_beta for the radial profile (|x|^b - |y|^b <= |x-y|^b for b <= 1)."""
        if self.kind == "holder_radial":
            return abs(self.amplitude)
        if self.kind == "affine":
            return float(np.linalg.norm(self.slope)) if self.slope else 0.0
        return 0.0


@dataclass(frozen=True)
class Obstacle:
    """Constant ``M0`` or paraboloid ``M0 - curvature*|x - center|^2/(2d)``."""

    kind: str = "paraboloid"
    M0: float = 10.0
    curvature: float = 0.0
    center: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in OBSTACLE_KINDS:
            raise ModelError(f"unknown obstacle kind {self.kind!r}")
        if self.M0 <= 0:
            raise ModelError("obstacle level M0 must be positive")

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        dim = x.shape[-1]
        if self.kind == "constant":
            return np.full(x.shape[:-1], self.M0)
        c = np.zeros(dim)
        if self.center:
            c[:] = np.asarray(self.center, dtype=float)
        r2 = np.sum((x - c) ** 2, axis=-1)
        return self.M0 - self.curvature * r2 / (2 * dim)


@dataclass
class BoundaryData:
    """Dirichlet nodes ``S`` (boolean node mask) and their values ``u0``."""

    mask: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        self.values = np.where(self.mask, np.asarray(self.values, dtype=float), 0.0)

    def __eq__(self, other):
        return (
            isinstance(other, BoundaryData)
            and np.array_equal(self.mask, other.mask)
            and np.array_equal(self.values, other.values)
        )


FACES = ("xmin", "xmax", "ymin", "ymax", "zmin", "zmax")


def face_mask(grid: Grid, faces) -> np.ndarray:
    """Boolean mask of the nodes on the named box faces (``"all"`` for every face)."""
    if faces == "all" or faces == ("all",):
        return grid.boundary_mask.copy()
    mask = np.zeros(grid.shape, dtype=bool)
    for face in faces:
        if face not in FACES[: 2 * grid.dim]:
            raise ModelError(f"face {face!r} not available in {grid.dim}D")
        ax = FACES.index(face) // 2
        sl = [slice(None)] * grid.dim
        sl[ax] = 0 if face.endswith("min") else -1
        mask[tuple(sl)] = True
    return mask


def trace_boundary(grid: Grid, faces, func) -> BoundaryData:
    """Dirichlet data on ``faces`` given by ``func(points)``."""
    mask = face_mask(grid, faces)
    return BoundaryData(mask, func(grid.points))


def plane_trace(q0: float = 1.0, nu=None, offset=None):
    """``q0 * ((x - offset) . nu)^+`` as a callable on point arrays."""

    def func(x):
        dim = x.shape[-1]
        n = np.zeros(dim)
        n[0] = 1.0
        if nu is not None:
            n[:] = np.asarray(nu, dtype=float)
            n /= np.linalg.norm(n)
        b = np.zeros(dim) if offset is None else np.asarray(offset, dtype=float)
        return q0 * np.maximum((x - b) @ n, 0.0)

    return func


@dataclass
class ModelSpec:
    grid: Grid
    F: NonlinearTerm
    Q: ForceField
    psi: Obstacle
    bc: BoundaryData

    @cached_property
    def Q_nodes(self) -> np.ndarray:
        return self.Q(self.grid.points)

    @cached_property
    def psi_nodes(self) -> np.ndarray:
        return self.psi(self.grid.points)

    @property
    def Qmin(self) -> float:
        return float(self.Q_nodes.min())

    @property
    def Qmax(self) -> float:
        return float(self.Q_nodes.max())

    @property
    def M0(self) -> float:
        return float(self.psi_nodes.max())

    @property
    def F0(self) -> float:
        return self.F.F0

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def scale(self) -> float:
        """Magnitude used to turn relative tolerances into absolute ones."""
        return max(1.0, self.Qmax**2)


def make_model(grid: Grid | GridSpec, F=None, Q=None, psi=None, bc=None) -> ModelSpec:
    if isinstance(grid, GridSpec):
        grid = build_grid(grid)
    F = F or NonlinearTerm()
    Q = Q or ForceField()
    psi = psi or Obstacle(kind="paraboloid", M0=10.0, curvature=F.kappa if F.kind == "quadratic_affine" else 0.0)
    if bc is None:
        bc = trace_boundary(grid, "all", lambda x: np.zeros(x.shape[:-1]))
    return ModelSpec(grid, F, Q, psi, bc)


@dataclass
class Check:
    name: str
    passed: bool
    worst: float  # worst value of the checked quantity (signed, see name)
    witness: list[float] | None = None  # location (point or t) of the worst value


@dataclass
class ValidationReport:
    checks: list[Check] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def __getitem__(self, name) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def _worst(values, locs, mode):
    i = int(np.argmax(values) if mode == "max" else np.argmin(values))
    loc = np.atleast_1d(locs[i]).astype(float).tolist()
    return float(values[i]), loc


def validate_model(spec: ModelSpec, tol: float = 1e-10) -> ValidationReport:
    """Check every standing assumption numerically, with a worst-case witness each."""
    rep = ValidationReport()
    F = spec.F
    tmax = max(spec.M0, 1.0) + 1.0
    t = np.linspace(-tmax, tmax, 801)
    neg = t[t <= 0]

    rep.checks.append(Check("F(0)=0", abs(float(F.F(0.0))) <= tol, float(F.F(0.0)), [0.0]))
    dF = F.dF(neg)
    w, at = _worst(dF, neg, "max")
    rep.checks.append(Check("F'<=0 on t<=0", w <= tol, w, at))
    w, at = _worst(dF, neg, "min")
    rep.checks.append(Check("F'>=-F0 on t<=0", w >= -F.F0 - tol, w, at))
    d2 = F.d2F(t)
    w, at = _worst(d2, t, "min")
    rep.checks.append(Check("F''>=0", w >= -tol, w, at))
    w, at = _worst(d2, t, "max")
    rep.checks.append(Check("F''<=F0", w <= F.F0 + tol, w, at))

    pts = spec.grid.flat_points
    q = spec.Q_nodes.ravel()
    w, at = _worst(q, pts, "min")
    rep.checks.append(Check("Qmin>0", w > 0, w, at))

    psi = spec.psi_nodes
    w, at = _worst(psi.ravel(), pts, "min")
    rep.checks.append(Check("Psi>0", w > 0, w, at))
    lap = laplacian(ScalarField(spec.grid, psi))
    sup = (lap.values + F.f(psi))[lap.valid]
    if sup.size:
        w, at = _worst(sup, pts[lap.valid.ravel()], "max")
        scale = max(1.0, float(np.abs(psi).max()))
        rep.checks.append(Check("Laplace(Psi)+f(Psi)<=0", w <= tol * scale, w, at))

    m = spec.bc.mask
    rep.checks.append(Check("S nonempty", bool(m.any()), float(m.sum())))
    if m.any():
        u0 = spec.bc.values[m]
        w, at = _worst(u0, pts[m.ravel()], "min")
        rep.checks.append(Check("u0>=0 on S", w >= 0, w, at))
        gap = u0 - psi[m]
        w, at = _worst(gap, pts[m.ravel()], "max")
        rep.checks.append(Check("u0<=Psi on S", w <= tol, w, at))
    return rep
