"""Uniform tensor grids in one to three dimensions.

Fields are stored as numpy arrays indexed ``values[i0, i1, ...]`` with axis
``k`` running along coordinate ``k`` (``ij`` indexing).  Flattening always
uses C (row-major) order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import ceil, pi

import numpy as np
from scipy.interpolate import RegularGridInterpolator

MIN_NODES = 9
_HULL_TOL = 1e-10

# Per-axis subsample counts on partial dual cells: positivity, and ball cuts.
_SUB = 4
BALL_SUB = {1: 64, 2: 16, 3: 8}


class GridError(ValueError):
    """Raised for invalid grid specifications or out-of-hull requests."""


def _as_tuple(value, dim, cast):
    arr = np.atleast_1d(np.asarray(value, dtype=float if cast is float else int))
    if arr.size == 1 and dim > 1:
        arr = np.repeat(arr, dim)
    return tuple(cast(v) for v in arr)


@dataclass(frozen=True)
class GridSpec:
    dim: int
    origin: tuple[float, ...]
    extent: tuple[float, ...]
    n: tuple[int, ...]

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise GridError(f"dim must be 1, 2 or 3, got {self.dim}")
        object.__setattr__(self, "origin", _as_tuple(self.origin, self.dim, float))
        object.__setattr__(self, "extent", _as_tuple(self.extent, self.dim, float))
        object.__setattr__(self, "n", _as_tuple(self.n, self.dim, int))
        for name in ("origin", "extent", "n"):
            if len(getattr(self, name)) != self.dim:
                raise GridError(f"{name} must have {self.dim} entries")
        if any(e <= 0 for e in self.extent):
            raise GridError(f"extent must be positive, got {self.extent}")
        if any(k < MIN_NODES for k in self.n):
            raise GridError(f"need at least {MIN_NODES} nodes per axis, got {self.n}")

    @property
    def h(self) -> tuple[float, ...]:
        return tuple(e / (k - 1) for e, k in zip(self.extent, self.n))


class Grid:
    """A built grid: node coordinates and index/coordinate maps."""

    def __init__(self, spec: GridSpec):
        self.spec = spec
        self.dim = spec.dim
        self.shape = spec.n
        self.h = np.array(spec.h)
        self.origin = np.array(spec.origin)
        self.upper = self.origin + np.array(spec.extent)
        self.axes = [o + np.arange(k) * hk for o, k, hk in zip(spec.origin, spec.n, spec.h)]
        # make the last node land exactly on the upper face
        for ax, up in zip(self.axes, self.upper):
            ax[-1] = up

    def __eq__(self, other):
        return isinstance(other, Grid) and other.spec == self.spec

    def __hash__(self):
        return hash(self.spec)

    def __repr__(self):
        return f"Grid({self.spec!r})"

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def hmin(self) -> float:
        return float(self.h.min())

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @cached_property
    def points(self) -> np.ndarray:
        """Node coordinates, shape ``(*shape, dim)``."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    @cached_property
    def flat_points(self) -> np.ndarray:
        return self.points.reshape(-1, self.dim)

    def index_to_point(self, index) -> np.ndarray:
        index = np.asarray(index, dtype=float)
        return self.origin + index * self.h

    def point_to_index(self, p) -> np.ndarray:
        """Fractional node index of a point (exact inverse of index_to_point on nodes)."""
        p = np.asarray(p, dtype=float)
        return (p - self.origin) / self.h

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        for ax in range(self.dim):
            sl = [slice(None)] * self.dim
            sl[ax] = 0
            mask[tuple(sl)] = True
            sl[ax] = -1
            mask[tuple(sl)] = True
        return mask

    @cached_property
    def node_mass(self) -> np.ndarray:
        """Trapezoidal node weights (dual-cell volumes clipped to the box)."""
        mass = np.full(self.shape, self.cell_volume)
        for ax in range(self.dim):
            sl = [slice(None)] * self.dim
            sl[ax] = 0
            mass[tuple(sl)] *= 0.5
            sl[ax] = -1
            mass[tuple(sl)] *= 0.5
        return mass

    def contains(self, p, margin: float = 0.0) -> bool:
        p = np.asarray(p, dtype=float).reshape(-1, self.dim)
        lo = self.origin + margin - _HULL_TOL
        hi = self.upper - margin + _HULL_TOL
        return bool(np.all((p >= lo) & (p <= hi)))

    def ball_inside(self, x0, r: float, margin_cells: float = 1.0) -> bool:
        x0 = np.asarray(x0, dtype=float)
        margin = margin_cells * self.h
        return bool(
            np.all(x0 - r - margin >= self.origin - _HULL_TOL)
            and np.all(x0 + r + margin <= self.upper + _HULL_TOL)
        )


def build_grid(spec: GridSpec) -> Grid:
    return Grid(spec)


def make_grid(dim, origin, extent, n) -> Grid:
    return Grid(GridSpec(dim, origin, extent, n))


@dataclass
class ScalarField:
    grid: Grid
    values: np.ndarray
    valid: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != tuple(self.grid.shape):
            raise GridError(f"field shape {self.values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise GridError("field values must be finite")

    @classmethod
    def from_function(cls, grid: Grid, func) -> ScalarField:
        """Sample ``func(points)`` where points has shape ``(*shape, dim)``."""
        return cls(grid, np.broadcast_to(func(grid.points), grid.shape).copy())

    def copy(self) -> ScalarField:
        valid = None if self.valid is None else self.valid.copy()
        return ScalarField(self.grid, self.values.copy(), valid)


@dataclass
class VectorField:
    grid: Grid
    values: np.ndarray  # shape (*shape, dim)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (*self.grid.shape, self.grid.dim):
            raise GridError("vector field shape does not match grid")
        if not np.all(np.isfinite(self.values)):
            raise GridError("vector field values must be finite")

    def norm(self) -> np.ndarray:
        return np.linalg.norm(self.values, axis=-1)


def _clip_to_hull(grid: Grid, pts: np.ndarray) -> np.ndarray:
    lo = grid.origin - _HULL_TOL * (1 + np.abs(grid.origin))
    hi = grid.upper + _HULL_TOL * (1 + np.abs(grid.upper))
    if np.any(pts < lo) or np.any(pts > hi):
        raise GridError("sample point outside grid hull")
    return np.clip(pts, grid.origin, grid.upper)


def interpolator(grid: Grid, values: np.ndarray) -> RegularGridInterpolator:
    return RegularGridInterpolator(grid.axes, values, method="linear", bounds_error=True)


def sample(f: ScalarField | VectorField, p, *, clamp: bool = False):
    """Multilinear interpolation of a field at one point or an array of points.

    A single point (shape ``(dim,)``) returns a scalar for scalar fields.
    With ``clamp=True`` points outside the hull are moved onto it instead of
    raising.
    """
    grid = f.grid
    pts = np.asarray(p, dtype=float)
    single = pts.ndim == 1 and grid.dim > 1 or pts.ndim == 0
    pts = pts.reshape(-1, grid.dim)
    pts = np.clip(pts, grid.origin, grid.upper) if clamp else _clip_to_hull(grid, pts)
    out = interpolator(grid, f.values)(pts)
    if single:
        return float(out[0]) if out.ndim == 1 else out[0]
    return out


def laplacian(f: ScalarField) -> ScalarField:
    """Second-order central Laplacian; the boundary ring is flagged invalid (value 0)."""
    u = f.values
    grid = f.grid
    lap = np.zeros_like(u)
    inner = tuple(slice(1, -1) for _ in range(grid.dim))
    for ax, hk in enumerate(grid.h):
        plus = list(inner)
        minus = list(inner)
        plus[ax] = slice(2, None)
        minus[ax] = slice(None, -2)
        lap[inner] += (u[tuple(plus)] - 2.0 * u[inner] + u[tuple(minus)]) / hk**2
    valid = ~grid.boundary_mask
    return ScalarField(grid, lap, valid)


def gradient(f: ScalarField) -> VectorField:
    """Central differences inside, first-order one-sided on the boundary."""
    grads = np.gradient(f.values, *f.grid.h)
    if f.grid.dim == 1:
        grads = [grads]
    return VectorField(f.grid, np.stack(grads, axis=-1))


def dirichlet_density(f: ScalarField) -> np.ndarray:
    """Nodal |grad u|^2 built from squared edge differences.

    Each axis contributes the mean of the squared forward and backward
    differences at the node, so that summing against the trapezoidal node
    weights reproduces the edge-based Dirichlet energy.  Unlike squaring a
    central difference, this is exact on the dual cell of a node sitting on a
    planar kink.
    """
    u = f.values
    dens = np.zeros_like(u)
    for ax, hk in enumerate(f.grid.h):
        d = np.diff(u, axis=ax) / hk
        sq = d * d
        total = np.zeros_like(u)
        count = np.zeros_like(u)
        lo = [slice(None)] * u.ndim
        hi = [slice(None)] * u.ndim
        lo[ax] = slice(None, -1)
        hi[ax] = slice(1, None)
        total[tuple(lo)] += sq
        count[tuple(lo)] += 1
        total[tuple(hi)] += sq
        count[tuple(hi)] += 1
        dens += total / count
    return dens


@dataclass
class BallQuadrature:
    index: tuple[np.ndarray, ...]  # multi-index of the nodes carrying weight
    weights: np.ndarray
    points: np.ndarray  # (k, dim)

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def integrate(self, values: np.ndarray) -> float:
        """Integrate a nodal array (full grid shape) over the ball."""
        return float(np.dot(self.weights, values[self.index]))


def _require_ball(grid: Grid, x0, r: float):
    if r <= 0:
        raise GridError("radius must be positive")
    if not grid.ball_inside(x0, r):
        raise GridError(f"ball B_{r:g}({np.asarray(x0).tolist()}) not inside grid hull with margin")


def subsample_offsets(dim: int, k: int = _SUB) -> np.ndarray:
    """Cell-centred k^dim subsample offsets in units of h."""
    per_axis = (np.arange(k) + 0.5) / k - 0.5
    mesh = np.meshgrid(*([per_axis] * dim), indexing="ij")
    return np.stack(mesh, axis=-1).reshape(-1, dim)


def ball_quadrature(grid: Grid, x0, r: float) -> BallQuadrature:
    """Node weights for integrating over B_r(x0).

    A node's weight is the volume of its dual cell inside the ball; cells cut
    by the sphere are resolved by a fine subsample of the indicator.
    """
    x0 = np.asarray(x0, dtype=float).reshape(grid.dim)
    _require_ball(grid, x0, r)
    lo = np.floor((x0 - r - grid.origin) / grid.h - 0.5).astype(int)
    hi = np.ceil((x0 + r - grid.origin) / grid.h + 0.5).astype(int)
    lo = np.maximum(lo, 0)
    hi = np.minimum(hi, np.array(grid.shape) - 1)
    ranges = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
    idx = np.stack(np.meshgrid(*ranges, indexing="ij"), axis=-1).reshape(-1, grid.dim)
    pts = grid.origin + idx * grid.h
    dist = np.linalg.norm(pts - x0, axis=1)
    half_diag = 0.5 * float(np.linalg.norm(grid.h))
    frac = np.where(dist + half_diag <= r, 1.0, 0.0)
    partial = (dist + half_diag > r) & (dist - half_diag < r)
    if np.any(partial):
        offs = subsample_offsets(grid.dim, BALL_SUB[grid.dim]) * grid.h
        sub = pts[partial][:, None, :] + offs[None, :, :] - x0
        frac[partial] = np.mean(np.sum(sub * sub, axis=-1) < r * r, axis=1)
    keep = frac > 0
    idx = idx[keep]
    weights = frac[keep] * grid.cell_volume
    return BallQuadrature(tuple(idx.T), weights, pts[keep])


@dataclass
class SphereQuadrature:
    points: np.ndarray  # (k, dim)
    weights: np.ndarray
    normals: np.ndarray  # outward unit normals

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))


def sphere_quadrature(grid: Grid, x0, r: float) -> SphereQuadrature:
    """Parameterized samples on the sphere of radius r about x0."""
    x0 = np.asarray(x0, dtype=float).reshape(grid.dim)
    _require_ball(grid, x0, r)
    h = grid.hmin
    if grid.dim == 1:
        normals = np.array([[-1.0], [1.0]])
        weights = np.ones(2)
    elif grid.dim == 2:
        n_theta = max(64, ceil(8 * pi * r / h))
        theta = 2 * pi * np.arange(n_theta) / n_theta
        normals = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        weights = np.full(n_theta, 2 * pi * r / n_theta)
    else:
        n_pol = max(16, ceil(2 * pi * r / h))
        n_az = 2 * n_pol
        z, wz = np.polynomial.legendre.leggauss(n_pol)
        phi = 2 * pi * np.arange(n_az) / n_az
        zz, pp = np.meshgrid(z, phi, indexing="ij")
        s = np.sqrt(1 - zz**2)
        normals = np.stack([s * np.cos(pp), s * np.sin(pp), zz], axis=-1).reshape(-1, 3)
        weights = (np.repeat(wz, n_az) * (2 * pi / n_az)) * r * r
    return SphereQuadrature(x0 + r * normals, weights, normals)


def unit_ball_volume(dim: int) -> float:
    return {1: 2.0, 2: pi, 3: 4.0 * pi / 3.0}[dim]


def unit_sphere_area(dim: int) -> float:
    return {1: 2.0, 2: 2.0 * pi, 3: 4.0 * pi}[dim]
