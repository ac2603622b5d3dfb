"""Closed-form and brute-force reference solutions."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from math import factorial

import numpy as np
from scipy.optimize import brentq

from .grid import Grid, ScalarField, make_grid
from .model import BoundaryData, ModelSpec


class OracleError(ValueError):
    pass


@dataclass
class OracleProfile:
    description: str
    field: ScalarField
    fb_location: np.ndarray
    J_exact: float
    extra: dict = field(default_factory=dict)


def _halfspace_volume(lo, hi, n, c) -> float:
    """|{x in box : n.x > c}| by inclusion-exclusion over the box vertices."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    n = np.asarray(n, dtype=float)
    scale = 1.0
    keep = np.abs(n) > 1e-14
    if not keep.all():
        scale = float(np.prod((hi - lo)[~keep]))
        lo, hi, n = lo[keep], hi[keep], n[keep]
    if n.size == 0:
        return scale * (1.0 if 0.0 > c else 0.0)
    # reflect negative components so that every n_i > 0
    neg = n < 0
    lo, hi = np.where(neg, -hi, lo), np.where(neg, -lo, hi)
    n = np.abs(n)
    d = n.size
    total = 0.0
    for corner in product((0, 1), repeat=d):
        v = np.where(np.array(corner) == 1, hi, lo)
        total += (-1) ** sum(corner) * max(c - float(n @ v), 0.0) ** d
    below = total / (factorial(d) * float(np.prod(n)))
    return scale * (float(np.prod(hi - lo)) - below)


def plane_field(Q0: float, nu, b, grid: Grid, q_volume: float = 1.0) -> OracleProfile:
    """u = Q0 ((x - b).nu)^+ with J over the box for F = 0 and a constant volume weight."""
    nu = np.asarray(nu, dtype=float).reshape(grid.dim)
    if abs(np.linalg.norm(nu) - 1.0) > 1e-12:
        raise OracleError("nu must be a unit vector")
    b = np.asarray(b, dtype=float).reshape(grid.dim)
    u = ScalarField(grid, Q0 * np.maximum((grid.points - b) @ nu, 0.0))
    area = _halfspace_volume(grid.origin, grid.upper, nu, float(nu @ b))
    dirichlet = Q0**2 * area
    volume = q_volume**2 * area
    return OracleProfile(
        "plane",
        u,
        b,
        dirichlet + volume,
        {"nu": nu, "dirichlet": dirichlet, "volume": volume, "positive_volume": area},
    )


def _one_d_profile(a, Q0, kappa, lam):
    """Return (x*, u, du) for -u'' = kappa - lam*u, u(0)=a, u(x*)=0, u'(x*)=-Q0."""
    if lam == 0.0:
        if kappa == 0.0:
            xs = a / Q0
        else:
            disc = Q0**2 - 2.0 * kappa * a
            if disc < 0:
                raise OracleError("no free boundary: Q0^2 < 2 kappa a")
            xs = (Q0 - np.sqrt(disc)) / kappa

        def u(x):
            s = np.asarray(x, dtype=float) - xs
            return -0.5 * kappa * s * s - Q0 * s

        def du(x):
            s = np.asarray(x, dtype=float) - xs
            return -kappa * s - Q0

        return xs, u, du
    k = np.sqrt(lam)
    p = kappa / lam

    def u(x):
        s = np.asarray(x, dtype=float) - xs
        return p - p * np.cosh(k * s) - (Q0 / k) * np.sinh(k * s)

    def du(x):
        s = np.asarray(x, dtype=float) - xs
        return -p * k * np.sinh(k * s) - Q0 * np.cosh(k * s)

    def at_zero(x_star):
        return p - p * np.cosh(k * x_star) + (Q0 / k) * np.sinh(k * x_star) - a

    hi = 1.0
    while at_zero(hi) < 0:
        hi *= 2.0
        if hi > 1e6:
            raise OracleError("no free boundary for these parameters")
    xs = brentq(at_zero, 0.0, hi, xtol=1e-15, rtol=1e-15)
    return xs, u, du


def _gauss(n=64):
    return np.polynomial.legendre.leggauss(n)


def one_d_exact(a: float, Q0: float, kappa: float, lam: float = 0.0, grid: Grid | None = None) -> OracleProfile:
    """1D one-phase profile with f(t) = kappa - lam*t and constant force Q0 on [0, L]."""
    if a <= 0 or Q0 <= 0 or kappa < 0 or lam < 0:
        raise OracleError("need a > 0, Q0 > 0, kappa >= 0, lam >= 0")
    grid = grid or make_grid(1, 0.0, 1.0, 257)
    if grid.dim != 1:
        raise OracleError("one_d_exact needs a 1D grid")
    xs, u, du = _one_d_profile(a, Q0, kappa, lam)
    L = float(grid.upper[0] - grid.origin[0])
    if xs >= L:
        raise OracleError(f"free boundary x*={xs:.6g} outside the domain")
    x = grid.axes[0] - grid.origin[0]
    vals = np.where(x < xs, u(np.minimum(x, xs)), 0.0)
    t, w = _gauss()
    s = 0.5 * xs * (t + 1.0)
    ws = 0.5 * xs * w
    uu = u(s)
    J = float(np.sum(ws * (du(s) ** 2 - 2.0 * kappa * uu + lam * uu * uu + Q0**2)))
    return OracleProfile(
        "one_d",
        ScalarField(grid, vals),
        np.array([grid.origin[0] + xs]),
        J,
        {"x_star": xs, "u": u, "du": du},
    )


def _linear_f(spec: ModelSpec):
    F = spec.F
    if F.kind == "zero":
        return 0.0, 0.0
    if F.kind == "quadratic_affine":
        return F.kappa, F.lam
    raise OracleError("brute force needs a linear f (zero or quadratic_affine term)")


def one_d_brute_force(spec: ModelSpec, n_fb: int) -> tuple[float, float]:
    """Scan n_fb free-boundary positions; solve the linear two-point problem on each and return argmin (x*, J)."""
    grid = spec.grid
    if grid.dim != 1:
        raise OracleError("one_d_brute_force needs a 1D spec")
    if n_fb < 1:
        raise OracleError("n_fb must be positive")
    kappa, lam = _linear_f(spec)
    a = float(spec.bc.values[0])
    x0 = float(grid.origin[0])
    L = float(grid.upper[0] - x0)
    if a == 0.0:
        return x0, 0.0
    xc = L * np.arange(1, n_fb + 1) / n_fb
    t, w = _gauss()
    s = 0.5 * xc[:, None] * (t[None, :] + 1.0)
    ws = 0.5 * xc[:, None] * w[None, :]
    if lam == 0.0:
        c = xc[:, None]
        u = a * (1.0 - s / c) + 0.5 * kappa * s * (c - s)
        du = -a / c + 0.5 * kappa * (c - 2.0 * s)
    else:
        k = np.sqrt(lam)
        p = kappa / lam
        c1 = a - p
        c2 = -(p + c1 * np.cosh(k * xc)) / np.sinh(k * xc)
        u = p + c1 * np.cosh(k * s) + c2[:, None] * np.sinh(k * s)
        du = k * (c1 * np.sinh(k * s) + c2[:, None] * np.cosh(k * s))
    q2 = spec.Q(x0 + s[..., None]) ** 2
    J = np.sum(ws * (du**2 + spec.F.F(u) + q2), axis=1)
    i = int(np.argmin(J))
    return x0 + float(xc[i]), float(J[i])


def radial_2d_exact(a: float, Q0: float, rho_in: float, grid: Grid | None = None, center=(0.0, 0.0)) -> OracleProfile:
    """Harmonic annulus profile A log(rho_fb/rho) with A = Q0 rho_fb and value a at rho_in."""
    if a <= 0 or Q0 <= 0 or rho_in <= 0:
        raise OracleError("need a > 0, Q0 > 0, rho_in > 0")

    def g(rho):
        return Q0 * rho * np.log(rho / rho_in) - a

    hi = 2.0 * rho_in
    while g(hi) < 0:
        hi *= 2.0
    rho_fb = brentq(g, rho_in, hi, xtol=1e-15, rtol=1e-15)
    c = np.asarray(center, dtype=float)
    if grid is not None:
        if grid.dim != 2:
            raise OracleError("radial_2d_exact needs a 2D grid")
        if not grid.ball_inside(c, rho_fb, margin_cells=0):
            raise OracleError(f"free-boundary radius {rho_fb:.6g} leaves the domain")
    else:
        R = 1.25 * rho_fb
        grid = make_grid(2, c - R, 2 * R, 129)
    A = Q0 * rho_fb
    rho = np.linalg.norm(grid.points - c, axis=-1)
    vals = np.where(rho <= rho_in, a, np.where(rho < rho_fb, A * np.log(rho_fb / np.maximum(rho, rho_in)), 0.0))
    J = 2 * np.pi * A * A * np.log(rho_fb / rho_in) + Q0**2 * np.pi * (rho_fb**2 - rho_in**2)
    inner = rho <= rho_in
    mask = inner | grid.boundary_mask
    bc = BoundaryData(mask, np.where(inner, a, 0.0))
    return OracleProfile(
        "radial_2d",
        ScalarField(grid, vals),
        c,
        float(J),
        {"rho_fb": rho_fb, "A": A, "bc": bc},
    )
