import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from freebound.grid import (
    GridError,
    GridSpec,
    ScalarField,
    ball_quadrature,
    build_grid,
    gradient,
    laplacian,
    make_grid,
    sample,
    sphere_quadrature,
)


def test_uniform_partition_1d():
    g = build_grid(GridSpec(1, (0.0,), (1.0,), (11,)))
    np.testing.assert_allclose(g.axes[0], np.linspace(0, 1, 11), atol=1e-15)


def test_spacing_2d():
    g = make_grid(2, (-1, -1), (2, 2), (129, 129))
    assert g.h == pytest.approx((1 / 64, 1 / 64))


def test_too_few_nodes():
    with pytest.raises(GridError):
        make_grid(2, 0, 1, (4, 4))


def test_sample_affine_and_bilinear():
    g1 = make_grid(1, 0, 1, 9)
    assert sample(ScalarField.from_function(g1, lambda x: 3 * x[..., 0]), [0.25]) == pytest.approx(0.75)
    g2 = make_grid(2, 0, 1, 9)
    f = ScalarField.from_function(g2, lambda x: x[..., 0] * x[..., 1])
    assert sample(f, [0.5, 0.5]) == pytest.approx(0.25)


def test_sample_outside_hull_raises():
    g = make_grid(2, 0, 1, 9)
    with pytest.raises(GridError):
        sample(ScalarField(g, np.zeros(g.shape)), [1.5, 0.5])


@settings(max_examples=30, deadline=None)
@given(c=st.floats(-10, 10), x=st.floats(0, 1), y=st.floats(0, 1))
def test_sample_constant(c, x, y):
    g = make_grid(2, 0, 1, 9)
    assert sample(ScalarField(g, np.full(g.shape, c)), [x, y]) == pytest.approx(c, abs=1e-12)


def test_laplacian_quadratic_exact():
    g = make_grid(2, -1, 2, 33)
    lap = laplacian(ScalarField.from_function(g, lambda x: np.sum(x**2, axis=-1)))
    np.testing.assert_allclose(lap.values[lap.valid], 4.0, atol=1e-9)


def test_laplacian_affine_zero():
    g = make_grid(2, -1, 2, 33)
    lap = laplacian(ScalarField.from_function(g, lambda x: 2 * x[..., 0] - x[..., 1] + 3))
    np.testing.assert_allclose(lap.values[lap.valid], 0.0, atol=1e-9)


def test_laplacian_sine():
    g = make_grid(1, 0, 1, 65)
    x = g.axes[0]
    lap = laplacian(ScalarField(g, np.sin(np.pi * x)))
    exact = -np.pi**2 * np.sin(np.pi * x)
    err = np.abs(lap.values - exact)[lap.valid] / np.abs(exact[lap.valid]).max()
    assert err.max() < 1e-2


def test_gradient_examples():
    g = make_grid(2, -1, 2, 17)
    gr = gradient(ScalarField.from_function(g, lambda x: 2 * x[..., 0] - x[..., 1]))
    np.testing.assert_allclose(gr.values[..., 0], 2.0, atol=1e-12)
    np.testing.assert_allclose(gr.values[..., 1], -1.0, atol=1e-12)
    assert np.abs(gradient(ScalarField(g, np.full(g.shape, 4.0))).values).max() == 0.0
    g1 = make_grid(1, 0, 1, 65)
    d = gradient(ScalarField(g1, g1.axes[0] ** 2)).values[..., 0]
    assert d[32] == pytest.approx(1.0, abs=1e-12)


def test_ball_quadrature_disk():
    g = make_grid(2, -1, 2, 257)
    bq = ball_quadrature(g, (0.0, 0.0), 0.5)
    assert bq.total == pytest.approx(np.pi / 4, rel=5e-3)
    assert np.all(bq.weights >= 0)
    assert bq.integrate(np.ones(g.shape)) == pytest.approx(bq.total)


def test_ball_quadrature_tiny_radius():
    g = make_grid(2, -1, 2, 65)
    r = 0.2 * g.hmin
    assert ball_quadrature(g, (0.0, 0.0), r).total == pytest.approx(np.pi * r * r, rel=0.05)


def test_sphere_quadrature_examples():
    g = make_grid(2, -1, 2, 129)
    sq = sphere_quadrature(g, (0.0, 0.0), 0.5)
    assert sq.total == pytest.approx(np.pi, abs=1e-6)
    g2 = make_grid(2, -2, 4, 129)
    unit = sphere_quadrature(g2, (0.0, 0.0), 1.0)
    sq_x = ScalarField.from_function(g2, lambda x: x[..., 1] ** 2)
    assert unit.integrate(sample(sq_x, unit.points)) == pytest.approx(np.pi, rel=1e-2)
    ramp = ScalarField.from_function(g2, lambda x: np.maximum(x[..., 0], 0))
    assert unit.integrate(sample(ramp, unit.points)) == pytest.approx(2.0, rel=1e-2)


def test_sphere_quadrature_3d_area():
    g = make_grid(3, -1, 2, 17)
    sq = sphere_quadrature(g, (0.0, 0.0, 0.0), 0.5)
    assert sq.total == pytest.approx(4 * np.pi * 0.25, rel=1e-3)
