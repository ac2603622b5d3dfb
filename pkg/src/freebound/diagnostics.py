"""Weiss energies, integral identities, measures, densities and flatness at free-boundary points.

Volume integrals use ball quadrature on the nodes; sphere integrals sample
the field by multilinear interpolation.  The indicator of ``{u > 0}`` enters
volume terms through the sub-cell positivity fraction of each node's dual
cell, and the measure ``mu = grad chi`` is the extracted contour with
``dmu = -nu_out dH^{d-1}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import ceil, log
import warnings

import numpy as np

from .energy import FB_LEVEL, positivity_threshold
from .grid import (
    Grid,
    GridError,
    ScalarField,
    ball_quadrature,
    dirichlet_density,
    gradient,
    interpolator,
    laplacian,
    make_grid,
    sample,
    sphere_quadrature,
    unit_ball_volume,
)
from .levelset import FreeBoundary, elements_in_ball, level_set
from .model import ModelSpec


class DiagnosticError(ValueError):
    pass


# ----------------------------------------------------------------------------
# helpers


def _check_radius(grid: Grid, r: float, cells: float):
    if r < cells * grid.hmin - 1e-12:
        raise DiagnosticError(f"radius {r:g} below {cells:g}h = {cells * grid.hmin:g}")


def _levels(u: ScalarField, fb_level: float):
    return level_set(u, positivity_threshold(u.values, fb_level))


def _sphere_chi(ls, sq) -> np.ndarray:
    """Positive fraction of the sphere around each sample.

    Samples are ordered along rings (the whole circle in 2D, azimuthal rings in
    3D); on each half-segment between neighbours the linear crossing of the
    extended field is located, so the result does not jump when the contour
    passes through a sample.
    """
    vals = ls.value(sq.points) - ls.level
    dim = sq.points.shape[1]
    if dim == 1:
        return (vals > 0).astype(float)
    if dim == 2:
        rings = vals[None, :]
    else:
        n_pol = int(round(np.sqrt(vals.size / 2)))
        rings = vals.reshape(n_pol, 2 * n_pol)
    a = rings
    b = np.roll(rings, -1, axis=1)

    def half(x, y):
        # positive fraction of the half-segment of [x, y] next to x
        same = (x > 0) == (y > 0)
        gap = np.abs(x - y)
        t = np.abs(x) / np.where(gap > 0, gap, 1.0)
        cut = np.where(x > 0, np.minimum(2 * t, 1.0), np.maximum(1.0 - 2 * t, 0.0))
        return np.where(same, (x > 0).astype(float), cut)

    right = half(a, b)
    left = np.roll(half(b, a), 1, axis=1)
    return (0.5 * (left + right)).ravel()


def _ext_grad_sampler(ls, grid: Grid):
    """Gradient of the signed extension; equals grad u on the positive side and stays smooth across the contour."""
    return interpolator(grid, gradient(ScalarField(grid, ls.ext)).values)


def _sphere_values(u: ScalarField, pts):
    return sample(u, pts, clamp=True)


@dataclass
class _Force:
    """Force and nonlinearity as seen by a (possibly rescaled) field.

    For a blow-up u_r on the unit ball the volume weight is Q(x0 + r x) and
    the potential is F(r u_r).
    """

    spec: ModelSpec
    x0: np.ndarray | None = None
    r: float = 1.0

    def Q(self, pts):
        pts = np.asarray(pts, dtype=float)
        if self.x0 is None:
            return self.spec.Q(pts)
        return self.spec.Q(self.x0 + self.r * pts)

    def F(self, v):
        return self.spec.F.F(self.r * np.asarray(v))

    def uFp(self, v):
        # u F'(u) in physical scaling
        v = np.asarray(v)
        return self.r * v * self.spec.F.dF(self.r * v)


# ----------------------------------------------------------------------------
# rescaling


def _unit_box(m: int) -> float:
    # half-width of a box holding B_1 with a two-cell margin
    return (m - 1) / (m - 5)


def rescale(u: ScalarField, x0, r: float, m: int | None = None) -> ScalarField:
    """u_{x0,r}(x) = u(x0 + r x)/r on an m^d grid covering B_1 (plus a two-cell margin)."""
    grid = u.grid
    x0 = np.asarray(x0, dtype=float).reshape(grid.dim)
    if r <= 0:
        raise DiagnosticError("radius must be positive")
    if not grid.ball_inside(x0, r, margin_cells=0):
        raise DiagnosticError("ball outside the grid hull")
    if m is None:
        m = int(np.clip(2 * ceil(r / grid.hmin) + 1, 17, 257))
    if m < 9:
        raise DiagnosticError("need m >= 9")
    L = _unit_box(m)
    ug = make_grid(grid.dim, -L, 2 * L, m)
    phys = x0 + r * ug.points.reshape(-1, grid.dim)
    inside = np.all((phys >= grid.origin - 1e-12) & (phys <= grid.upper + 1e-12), axis=1)
    vals = sample(u, phys, clamp=True) / r
    return ScalarField(ug, vals.reshape(ug.shape), inside.reshape(ug.shape))


def homogeneous_extension(u_r: ScalarField) -> ScalarField:
    """z(x) = |x| u_r(x/|x|); z(0) = 0.  Outside B_1 the same formula is used."""
    pts = u_r.grid.points
    rad = np.linalg.norm(pts, axis=-1)
    dirs = pts / np.where(rad > 0, rad, 1.0)[..., None]
    dirs[rad == 0] = 0.0
    vals = rad * sample(u_r, dirs.reshape(-1, u_r.grid.dim), clamp=True).reshape(rad.shape)
    return ScalarField(u_r.grid, np.where(rad > 0, vals, 0.0))


# ----------------------------------------------------------------------------
# Weiss energy


@dataclass
class WeissSample:
    r: float
    W: float
    F1: float
    Q1: float
    rho: float
    G: float

    def row(self) -> list[float]:
        return [self.r, self.W, self.F1, self.Q1, self.rho, self.G]


@dataclass
class MonotonicityReport:
    samples: list[WeissSample]
    worst_drop: float
    calibrated_C: float

    @property
    def radii(self) -> np.ndarray:
        return np.array([s.r for s in self.samples])

    @property
    def G(self) -> np.ndarray:
        return np.array([s.G for s in self.samples])


def _mu_term(fb: FreeBoundary, force: _Force, x0, r) -> float:
    """int_{B_r} Q^2 (x - x0) . dmu  with dmu = -nu_out dH^{d-1}."""
    c, meas, nrm = elements_in_ball(fb, x0, r)
    if meas.size == 0:
        return 0.0
    q2 = force.Q(c) ** 2
    return float(-np.sum(q2 * np.sum((c - x0) * nrm, axis=1) * meas))


def oscillation_modulus(spec_or_force, grid: Grid, x0, r: float, smin: float | None = None) -> float:
    """Dyadic sum  log 2 * sum_k osc_{B_{r/2^k}} Q  over radii >= smin (default 4h)."""
    force = spec_or_force if isinstance(spec_or_force, _Force) else _Force(spec_or_force)
    x0 = np.asarray(x0, dtype=float)
    smin = 4 * grid.hmin if smin is None else smin
    pts = grid.flat_points
    dist = np.linalg.norm(pts - x0, axis=1)
    near = dist <= r
    if not near.any():
        return 0.0
    qn = force.Q(pts[near])
    dn = dist[near]
    total = 0.0
    s = r
    while s >= smin - 1e-14:
        sel = dn <= s
        if sel.sum() > 1:
            total += float(qn[sel].max() - qn[sel].min())
        s /= 2.0
    return log(2.0) * total


def calibrated_constant(u: ScalarField, spec: ModelSpec, x0, r: float) -> float:
    """omega_d * L * F0 * (1 + M0) with L the largest nodal |grad u| in B_r(x0)."""
    grid = u.grid
    dist = np.linalg.norm(grid.points - np.asarray(x0, dtype=float), axis=-1)
    L = float(gradient(u).norm()[dist <= r].max(initial=0.0))
    return unit_ball_volume(grid.dim) * L * spec.F0 * (1.0 + spec.M0)


def _weiss_terms(u: ScalarField, force: _Force, x0, r: float, fb_level: float):
    grid = u.grid
    d = grid.dim
    x0 = np.asarray(x0, dtype=float).reshape(d)
    bq = ball_quadrature(grid, x0, r)
    sq = sphere_quadrature(grid, x0, r)
    ls = _levels(u, fb_level)
    v = u.values
    q2 = force.Q(grid.points) ** 2
    dens = dirichlet_density(u)
    frac = ls.fraction
    vol = bq.integrate(dens + force.F(v) + q2 * frac)
    us = _sphere_values(u, sq.points)
    W = vol / r**d - sq.integrate(us * us) / r ** (d + 1)
    F1 = bq.integrate(force.uFp(v)) / r ** (d + 1)
    chi_s = _sphere_chi(ls, sq)
    q2s = force.Q(sq.points) ** 2
    Q1 = (
        -_mu_term(ls.free_boundary, force, x0, r) / r ** (d + 1)
        - d * bq.integrate(q2 * frac) / r ** (d + 1)
        + sq.integrate(q2s * chi_s) / r**d
    )
    return W, F1, Q1


def weiss(u: ScalarField, spec: ModelSpec, x0, r: float, C: float | None = None, fb_level: float = FB_LEVEL) -> WeissSample:
    """Weiss energy W(u, r; Q) at x0 with corrections F1, Q1, the modulus rho and G = W + C r + C Qmax rho."""
    _check_radius(u.grid, r, 4)
    W, F1, Q1 = _weiss_terms(u, _Force(spec), x0, r, fb_level)
    rho = oscillation_modulus(spec, u.grid, x0, r)
    if C is None:
        C = calibrated_constant(u, spec, x0, r)
    return WeissSample(r, W, F1, Q1, rho, W + C * r + C * spec.Qmax * rho)


def unit_weiss(u_r: ScalarField, spec: ModelSpec, x0, r: float, fb_level: float = FB_LEVEL) -> float:
    """W(u_r, 1, Q(x0 + r x)) of a blow-up field on its unit-ball grid."""
    force = _Force(spec, np.asarray(x0, dtype=float), r)
    W, _, _ = _weiss_terms(u_r, force, np.zeros(u_r.grid.dim), 1.0, fb_level)
    return W


def weiss_scan(
    u: ScalarField, spec: ModelSpec, x0, radii, C: float | None = None, fb_level: float = FB_LEVEL
) -> MonotonicityReport:
    radii = np.asarray(radii, dtype=float)
    if radii.size < 3:
        raise DiagnosticError("need at least 3 radii")
    if np.any(np.diff(radii) <= 0):
        raise DiagnosticError("radii must be strictly increasing")
    if C is None:
        C = calibrated_constant(u, spec, x0, float(radii[-1]))
    samples = [weiss(u, spec, x0, float(r), C, fb_level) for r in radii]
    G = np.array([s.G for s in samples])
    return MonotonicityReport(samples, float(np.min(np.diff(G))), float(C))


def dyadic_radii(rmin: float, rmax: float, per_octave: int = 1) -> np.ndarray:
    """Radii rmax / 2^(k/per_octave) that are >= rmin, increasing."""
    if not 0 < rmin <= rmax:
        raise DiagnosticError("need 0 < rmin <= rmax")
    out = []
    k = 0
    while True:
        r = rmax * 2.0 ** (-k / per_octave)
        if r < rmin * (1 - 1e-12):
            break
        out.append(r)
        k += 1
    return np.array(out[::-1])


def weiss_gap(u_r: ScalarField, z_r: ScalarField, spec: ModelSpec, x0, r: float, fb_level: float = FB_LEVEL) -> float:
    """W(z_r) - W(u_r) + (r/d)(F2 + Q2), the quantity that appears as (d/r)(...) in the second monotonicity formula."""
    if u_r.grid != z_r.grid:
        raise DiagnosticError("u_r and z_r live on different grids")
    grid = u_r.grid
    d = grid.dim
    if not np.any(u_r.values > 0) and not np.any(z_r.values > 0):
        return 0.0
    force = _Force(spec, np.asarray(x0, dtype=float), r)
    origin = np.zeros(d)
    Wz, _, _ = _weiss_terms(z_r, force, origin, 1.0, fb_level)
    Wu, _, _ = _weiss_terms(u_r, force, origin, 1.0, fb_level)
    sq = sphere_quadrature(grid, origin, 1.0)
    bq = ball_quadrature(grid, origin, 1.0)
    us = _sphere_values(u_r, sq.points)
    F2 = (sq.integrate(force.F(us)) - d * bq.integrate(force.F(z_r.values))) / r
    ls_u = _levels(u_r, fb_level)
    ls_z = _levels(z_r, fb_level)
    q2s = force.Q(sq.points) ** 2
    q2 = force.Q(grid.points) ** 2
    Q2 = (sq.integrate(q2s * _sphere_chi(ls_u, sq)) - d * bq.integrate(q2 * ls_z.fraction)) / r
    return float(Wz - Wu + (r / d) * (F2 + Q2))


def homogeneity_defect(u: ScalarField, x0, r: float, m: int | None = None) -> float:
    """max over the unit ball of |u_r - z_r|."""
    u_r = rescale(u, x0, r, m)
    z_r = homogeneous_extension(u_r)
    inside = np.linalg.norm(u_r.grid.points, axis=-1) <= 1.0
    return float(np.max(np.abs(u_r.values - z_r.values)[inside]))


# ----------------------------------------------------------------------------
# identities


def _relative(lhs: float, rhs: float) -> float:
    den = max(abs(lhs), abs(rhs))
    return 0.0 if den == 0 else abs(lhs - rhs) / den


@dataclass
class IdentityResidual:
    lhs: float
    rhs: float
    residual: float

    def __float__(self):
        return self.residual


def energy_identity(u: ScalarField, spec: ModelSpec, x0, r: float, fb_level: float = FB_LEVEL) -> IdentityResidual:
    """int_{B_r} |grad u|^2 + u F'(u)/2  versus  int_{dB_r} u du/dnu."""
    grid = u.grid
    _check_radius(grid, r, 4)
    x0 = np.asarray(x0, dtype=float).reshape(grid.dim)
    bq = ball_quadrature(grid, x0, r)
    sq = sphere_quadrature(grid, x0, r)
    v = u.values
    lhs = bq.integrate(dirichlet_density(u) + 0.5 * v * spec.F.dF(v))
    gs = _ext_grad_sampler(_levels(u, fb_level), grid)(np.clip(sq.points, grid.origin, grid.upper))
    us = _sphere_values(u, sq.points)
    rhs = sq.integrate(us * np.sum(gs * sq.normals, axis=1))
    return IdentityResidual(lhs, rhs, _relative(lhs, rhs))


def energy_identity_residual(u: ScalarField, spec: ModelSpec, x0, r: float, fb_level: float = FB_LEVEL) -> float:
    return energy_identity(u, spec, x0, r, fb_level).residual


def pohozaev(u: ScalarField, spec: ModelSpec, x0, r: float, fb_level: float = FB_LEVEL) -> IdentityResidual:
    """Domain-variation balance along the radial field x - x0, with the free-boundary term from the contour."""
    grid = u.grid
    _check_radius(grid, r, 6)
    d = grid.dim
    x0 = np.asarray(x0, dtype=float).reshape(d)
    bq = ball_quadrature(grid, x0, r)
    sq = sphere_quadrature(grid, x0, r)
    v = u.values
    dens = dirichlet_density(u)
    Fv = spec.F.F(v)
    lhs = d * bq.integrate(dens + Fv)
    ls = _levels(u, fb_level)
    gs = _ext_grad_sampler(ls, grid)(np.clip(sq.points, grid.origin, grid.upper))
    gn = np.sum(gs * sq.normals, axis=1)
    us = _sphere_values(u, sq.points)
    rhs = (
        2 * bq.integrate(dens)
        + r * sq.integrate(_sphere_chi(ls, sq) * (np.sum(gs * gs, axis=1) - 2 * gn * gn))
        + r * sq.integrate(spec.F.F(us))
        + _mu_term(ls.free_boundary, _Force(spec), x0, r)
    )
    return IdentityResidual(lhs, rhs, _relative(lhs, rhs))


def pohozaev_residual(u: ScalarField, spec: ModelSpec, x0, r: float, fb_level: float = FB_LEVEL) -> float:
    return pohozaev(u, spec, x0, r, fb_level).residual


# ----------------------------------------------------------------------------
# measures and densities


@dataclass
class LambdaReport:
    lambda_total: float
    lambda0_total: float
    flux_form: float  # int_{dB_r} grad u . nu + int_{B_r} f(u)

    @property
    def route_gap(self) -> float:
        return _relative(self.lambda_total, self.flux_form)


def lambda_measure(u: ScalarField, spec: ModelSpec, x0, r: float, fb_level: float = FB_LEVEL) -> LambdaReport:
    grid = u.grid
    _check_radius(grid, r, 4)
    x0 = np.asarray(x0, dtype=float).reshape(grid.dim)
    bq = ball_quadrature(grid, x0, r)
    v = u.values
    lap = laplacian(u).values
    fv = spec.F.f(v)
    chi = v > positivity_threshold(v, fb_level)
    lam = bq.integrate(lap + fv)
    lam0 = bq.integrate(lap + fv * chi)
    sq = sphere_quadrature(grid, x0, r)
    ls = _levels(u, fb_level)
    gs = _ext_grad_sampler(ls, grid)(np.clip(sq.points, grid.origin, grid.upper))
    flux = sq.integrate(_sphere_chi(ls, sq) * np.sum(gs * sq.normals, axis=1)) + bq.integrate(fv)
    return LambdaReport(float(lam), float(lam0), float(flux))


def supersolution_defect(u: ScalarField, spec: ModelSpec, ring: int = 1) -> float:
    """min of Delta_h u + f(u) over nodes at least ``ring`` cells from the box boundary."""
    lap = laplacian(u)
    vals = lap.values + spec.F.f(u.values)
    mask = np.ones(u.grid.shape, dtype=bool)
    for ax in range(u.grid.dim):
        idx = np.arange(u.grid.shape[ax])
        ok = (idx >= ring) & (idx < u.grid.shape[ax] - ring)
        shp = [1] * u.grid.dim
        shp[ax] = -1
        mask &= ok.reshape(shp)
    return float(vals[mask].min())


def density_ratio(u: ScalarField, x0, r: float, fb_level: float = FB_LEVEL) -> float:
    """|B_r(x0) and {u > 0}| / |B_r(x0)| with sub-cell resolution of the positive set."""
    bq = ball_quadrature(u.grid, x0, r)
    frac = _levels(u, fb_level).fraction
    return bq.integrate(frac) / bq.total


@dataclass
class DensityEstimate:
    theta: float
    spread: float
    radii: np.ndarray
    ratios: np.ndarray

    def __float__(self):
        return self.theta


def density_limit(u: ScalarField, x0, radii, fb_level: float = FB_LEVEL) -> DensityEstimate:
    """Extrapolate the density ratio to r -> 0 with a linear fit in r; spread = max - min over the scan."""
    radii = np.sort(np.asarray(radii, dtype=float))
    small = radii < 4 * u.grid.hmin - 1e-12
    if small.any():
        warnings.warn(f"ignoring {int(small.sum())} radii below 4h", stacklevel=2)
        radii = radii[~small]
    if radii.size == 0:
        raise DiagnosticError("no usable radii")
    ratios = np.array([density_ratio(u, x0, r, fb_level) for r in radii])
    if radii.size == 1:
        theta = ratios[0]
    else:
        slope, intercept = np.polyfit(radii, ratios, 1)
        theta = intercept
    theta = float(np.clip(theta, 0.0, 1.0))
    return DensityEstimate(theta, float(ratios.max() - ratios.min()), radii, ratios)


# ----------------------------------------------------------------------------
# flatness and classification


@dataclass
class Flatness:
    nu: np.ndarray
    eps: float
    degenerate: bool = False


def flatness(u_r: ScalarField, Q0: float, nu=None) -> Flatness:
    """Smallest eps with Q0 (x.nu - eps)^+ <= u_r <= Q0 (x.nu + eps)^+ on the nodes of B_1.

    nu defaults to the normalized mean gradient over {u_r > 0}.  The bound is
    monotone in eps, so the optimal eps has a closed form.
    """
    grid = u_r.grid
    pts = grid.points
    inside = np.linalg.norm(pts, axis=-1) <= 1.0 + 1e-12
    if u_r.valid is not None:
        inside &= u_r.valid
    v = u_r.values
    if np.any(v[inside] < -1e-12):
        raise DiagnosticError("flatness needs u_r >= 0")
    pos = inside & (v > 0)
    if nu is None:
        if not pos.any():
            e1 = np.zeros(grid.dim)
            e1[0] = 1.0
            return Flatness(e1, float(np.max(np.abs(pts[inside] @ e1))), True)
        g = gradient(u_r).values[pos].mean(axis=0)
        n = float(np.linalg.norm(g))
        if n == 0:
            e1 = np.zeros(grid.dim)
            e1[0] = 1.0
            return Flatness(e1, float(np.max(np.abs(pts[inside] @ e1))), True)
        nu = g / n
    nu = np.asarray(nu, dtype=float)
    nu = nu / np.linalg.norm(nu)
    s = pts[inside] @ nu
    w = v[inside] / Q0
    eps_low = float(np.max(s - w, initial=0.0))
    p = w > 0
    eps_up = float(np.max(w[p] - s[p], initial=0.0))
    return Flatness(nu, max(eps_low, eps_up, 0.0), not pos.any())


EPS_FLOOR = 1e-9


@dataclass
class ClassifyConfig:
    radii: tuple[float, ...] | None = None  # density radii; default dyadic from 4h
    flat_radii: tuple[float, ...] | None = None  # flatness radii; default same as density radii
    delta_reg: float = 0.05
    near: float = 2.0  # allowed distance to the contour, in cells
    m: int | None = None
    fb_level: float = FB_LEVEL


@dataclass
class FBClassification:
    point: np.ndarray
    theta: float
    theta_spread: float
    nu: np.ndarray
    flatness_curve: list[tuple[float, float]]
    gamma_fit: float
    label: str
    warning: str = ""

    def to_dict(self) -> dict:
        return {
            "point": [float(x) for x in self.point],
            "theta": float(self.theta),
            "theta_spread": float(self.theta_spread),
            "nu": [float(x) for x in self.nu],
            "eps_curve": [[float(r), float(e)] for r, e in self.flatness_curve],
            "gamma_fit": float(self.gamma_fit),
            "label": self.label,
        }


def _default_radii(grid: Grid, x0) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float)
    room = float(np.min(np.minimum(x0 - grid.origin, grid.upper - x0))) - grid.hmin
    rmax = min(0.25 * float(np.min(grid.upper - grid.origin)), room)
    rmin = 4 * grid.hmin
    if rmax < rmin:
        raise DiagnosticError("point too close to the hull for a radius scan")
    return dyadic_radii(rmin, rmax, 2)


def classify_point(u: ScalarField, spec: ModelSpec, x0, cfg: ClassifyConfig | None = None) -> FBClassification:
    cfg = cfg or ClassifyConfig()
    grid = u.grid
    x0 = np.asarray(x0, dtype=float).reshape(grid.dim)
    ls = _levels(u, cfg.fb_level)
    fb = ls.free_boundary
    from .levelset import distance_to_free_boundary

    dist = float(distance_to_free_boundary(fb, x0[None])[0])
    if dist > cfg.near * grid.hmin:
        raise DiagnosticError(f"point {x0.tolist()} is {dist / grid.hmin:.2f}h from the free boundary")
    radii = np.asarray(cfg.radii if cfg.radii is not None else _default_radii(grid, x0), dtype=float)
    dens = density_limit(u, x0, radii, cfg.fb_level)
    flat_radii = np.asarray(cfg.flat_radii if cfg.flat_radii is not None else dens.radii, dtype=float)
    q0 = float(spec.Q(x0[None])[0])
    curve = []
    nu = None
    for r in flat_radii:
        fl = flatness(rescale(u, x0, r, cfg.m), q0)
        curve.append((float(r), max(fl.eps, EPS_FLOOR)))
        if nu is None:
            nu = fl.nu
    eps = np.array([e for _, e in curve])
    if np.all(eps <= EPS_FLOOR) or len(curve) < 2:
        gamma = 1.0
    else:
        gamma = float(np.polyfit(np.log(flat_radii), np.log(eps), 1)[0])
    theta = dens.theta
    warning = ""
    if abs(theta - 0.5) <= cfg.delta_reg:
        label = "Regular"
    elif theta >= 0.5 + cfg.delta_reg:
        label = "Singular"
    else:
        label = "Undetermined"
        if theta < 0.5 - cfg.delta_reg:
            warning = "density below 1/2: not a free-boundary point of a minimizer"
    return FBClassification(x0, theta, dens.spread, nu, curve, gamma, label, warning)


# ----------------------------------------------------------------------------
# free-boundary condition, growth, perimeter


@dataclass
class SlopeReport:
    points: np.ndarray
    ratios: np.ndarray
    skipped: int
    tol: float = 0.1

    @property
    def median(self) -> float:
        return float(np.median(self.ratios)) if self.ratios.size else float("nan")

    @property
    def violations(self) -> np.ndarray:
        return np.abs(self.ratios - 1.0) > self.tol

    def summary(self) -> dict:
        r = self.ratios
        if r.size == 0:
            return {"count": 0, "skipped": self.skipped}
        return {
            "count": int(r.size),
            "skipped": int(self.skipped),
            "median": float(np.median(r)),
            "min": float(r.min()),
            "max": float(r.max()),
            "q10": float(np.quantile(r, 0.1)),
            "q90": float(np.quantile(r, 0.9)),
            "violations": int(self.violations.sum()),
        }


def slope_check(u: ScalarField, spec: ModelSpec, fb: FreeBoundary, tol: float = 0.1, fb_level: float = FB_LEVEL) -> SlopeReport:
    """Inward slope at each contour vertex from samples at distances h, 2h, 3h, divided by Q there."""
    if fb.empty:
        raise DiagnosticError("empty free boundary")
    grid = u.grid
    h = grid.hmin
    ls = _levels(u, fb_level)
    margin = 4 * h
    keep = np.all((fb.points >= grid.origin + margin) & (fb.points <= grid.upper - margin), axis=1)
    pts = fb.points[keep]
    nrm = fb.normals[keep]
    s = h * np.arange(1, 4)
    samples = np.stack([ls.value(pts - k * nrm) for k in s], axis=1) - ls.level
    # least squares for b s + c s^2 through the contour point
    A = np.stack([s, s * s], axis=1)
    coef = np.linalg.lstsq(A, samples.T, rcond=None)[0]
    slopes = coef[0]
    ratios = slopes / spec.Q(pts)
    return SlopeReport(pts, ratios, int((~keep).sum()), tol)


@dataclass
class GrowthReport:
    points: np.ndarray
    radii: np.ndarray
    mean_ratio: np.ndarray  # (points, radii): mean_{dB_r} u / r
    sup_ratio: np.ndarray  # (points, radii): sup_{B_r} u / r
    c: float
    C: float
    c_nondeg: float  # min sup_ratio / Qmin
    C_growth: float  # max (mean_ratio - r F0 M0 / 2) / Qmax

    @property
    def band_ok(self) -> bool:
        return self.c > 0


def growth_report(u: ScalarField, spec: ModelSpec, points, radii) -> GrowthReport:
    grid = u.grid
    radii = np.asarray(radii, dtype=float)
    if radii.size == 0:
        raise DiagnosticError("radii empty")
    for r in radii:
        _check_radius(grid, r, 4)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    mean = np.zeros((len(pts), len(radii)))
    sup = np.zeros_like(mean)
    flat = grid.flat_points
    vals = u.values.ravel()
    for i, x0 in enumerate(pts):
        dist = np.linalg.norm(flat - x0, axis=1)
        for j, r in enumerate(radii):
            sq = sphere_quadrature(grid, x0, r)
            mean[i, j] = sq.integrate(_sphere_values(u, sq.points)) / sq.total / r
            sup[i, j] = float(vals[dist <= r].max(initial=0.0)) / r
    slack = radii[None, :] * spec.F0 * spec.M0 / 2
    return GrowthReport(
        pts,
        radii,
        mean,
        sup,
        float(mean.min()),
        float(mean.max()),
        float(sup.min() / spec.Qmin),
        float(((mean - slack) / spec.Qmax).max()),
    )


def perimeter_estimate(fb: FreeBoundary, x0, r: float) -> float:
    """Length (2D) or area (3D) of the contour inside B_r(x0); point count in 1D."""
    if fb.empty:
        return 0.0
    _, meas, _ = elements_in_ball(fb, x0, r)
    return float(meas.sum())


def sample_free_boundary(fb: FreeBoundary, count: int, grid: Grid, margin: float, seed: int = 0) -> np.ndarray:
    """Deterministic random subset of contour vertices at least ``margin`` from the hull."""
    if fb.empty:
        return np.zeros((0, fb.dim))
    keep = np.all((fb.points >= grid.origin + margin) & (fb.points <= grid.upper - margin), axis=1)
    pts = fb.points[keep]
    if len(pts) <= count:
        return pts
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(len(pts), size=count, replace=False))
    return pts[idx]
