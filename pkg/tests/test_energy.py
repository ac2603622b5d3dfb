import numpy as np
import pytest

from freebound.energy import el_residual, first_variation, total_energy
from freebound.grid import ScalarField, make_grid
from freebound.model import NonlinearTerm, Obstacle, make_model
from freebound.oracle import one_d_exact, plane_field

from conftest import one_d_model


def test_zero_field():
    g = make_grid(2, -1, 2, 33)
    e = total_energy(ScalarField(g, np.zeros(g.shape)), make_model(g))
    assert (e.dirichlet, e.nonlinear, e.volume, e.total) == (0.0, 0.0, 0.0, 0.0)


def test_plane_energy():
    g = make_grid(2, -1, 2, 129)
    e = total_energy(plane_field(1.0, [1, 0], [0, 0], g).field, make_model(g))
    assert e.dirichlet == pytest.approx(2.0, rel=0.02)
    assert e.volume == pytest.approx(2.0, rel=0.02)
    assert e.total == pytest.approx(4.0, rel=0.02)


def test_one_d_energy():
    spec = one_d_model()
    u = ScalarField(spec.grid, np.maximum(0.5 - spec.grid.axes[0], 0.0))
    e = total_energy(u, spec)
    assert e.dirichlet == pytest.approx(0.5, rel=0.01)
    assert e.volume == pytest.approx(0.5, rel=0.01)
    assert e.total == pytest.approx(1.0, rel=0.01)


def test_energy_additive_in_terms():
    g = make_grid(2, -1, 2, 65)
    spec = make_model(g, F=NonlinearTerm("quadratic_affine", kappa=0.2, F0=0.4))
    e = total_energy(plane_field(1.0, [1, 0], [0, 0], g).field, spec)
    assert e.total == pytest.approx(e.dirichlet + e.nonlinear + e.volume, abs=1e-14)
    assert e.nonlinear < 0


def test_first_variation_ramp():
    g = make_grid(2, -1, 2, 33)
    eps = 0.1
    fv = first_variation(ScalarField(g, np.full(g.shape, 0.05)), make_model(g), eps)
    interior = ~g.boundary_mask
    np.testing.assert_allclose(fv.values[interior], 1.0 / eps, rtol=1e-12)


def test_first_variation_saturated_harmonic():
    g = make_grid(2, -1, 2, 33)
    u = ScalarField.from_function(g, lambda x: 2.0 + x[..., 0] * x[..., 1])
    fv = first_variation(u, make_model(g), 0.1)
    assert np.abs(fv.values[~g.boundary_mask]).max() < 1e-9


def test_first_variation_one_d_oracle_interior():
    spec = one_d_model()
    o = one_d_exact(0.5, 1.0, 0.0, grid=spec.grid)
    fv = first_variation(o.field, spec, 0.5 * spec.grid.hmin)
    x = spec.grid.axes[0]
    away = (x > 3 * spec.grid.hmin) & (x < 0.5 - 3 * spec.grid.hmin)
    assert np.abs(fv.values[away]).max() <= 1e-3


def test_smoothed_energy_converges_monotonically():
    g = make_grid(2, -1, 2, 65)
    spec = make_model(g)
    u = plane_field(1.0, [1, 0], [0, 0], g).field
    sharp = total_energy(u, spec).total
    vals = [total_energy(u, spec, eps=e).total for e in (0.2, 0.1, 0.05, 0.02)]
    assert all(a <= b + 1e-14 for a, b in zip(vals, vals[1:]))
    assert abs(vals[-1] - sharp) < abs(vals[0] - sharp)


def test_el_residual_plane_exact():
    g = make_grid(2, -1, 2, 129)
    r = el_residual(plane_field(1.0, [1, 0], [0, 0], g).field, make_model(g), 3 * g.hmin)
    assert not r.empty
    assert r.value <= 1e-8


def test_el_residual_second_order():
    F = NonlinearTerm("quadratic_affine", kappa=0.2, lam=0.1, F0=0.4)
    res = []
    for n in (129, 257):
        g = make_grid(1, 0, 1, n)
        o = one_d_exact(0.5, 1.0, 0.2, 0.1, g)
        res.append(el_residual(o.field, make_model(g, F=F), 3 * g.hmin).value)
    assert 0.2 <= res[1] / res[0] <= 0.35


def test_el_residual_detects_non_solution():
    g = make_grid(2, -1, 2, 65)
    F = NonlinearTerm("quadratic_affine", kappa=0.2, F0=0.4)
    spec = make_model(g, F=F, psi=Obstacle("constant", M0=1.0))
    r = el_residual(ScalarField(g, spec.psi_nodes), spec, 3 * g.hmin)
    assert r.value == pytest.approx(0.2)


def test_el_residual_empty():
    g = make_grid(2, -1, 2, 33)
    r = el_residual(ScalarField(g, np.zeros(g.shape)), make_model(g), 3 * g.hmin)
    assert r.empty and r.value == 0.0


def test_el_residual_band_too_small():
    g = make_grid(2, -1, 2, 33)
    with pytest.raises(ValueError):
        el_residual(ScalarField(g, np.zeros(g.shape)), make_model(g), g.hmin)
