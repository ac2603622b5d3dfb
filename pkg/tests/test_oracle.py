import numpy as np
import pytest

from freebound.grid import make_grid
from freebound.model import BoundaryData, NonlinearTerm, make_model
from freebound.oracle import OracleError, one_d_brute_force, one_d_exact, plane_field, radial_2d_exact

X_STAR_KAPPA_02 = 0.5278640450004206  # (1 - sqrt(0.8)) / 0.2


def test_plane_box_energy():
    g = make_grid(2, -1, 2, 33)
    o = plane_field(1.0, [1, 0], [0, 0], g)
    assert o.J_exact == pytest.approx(4.0)
    o2 = plane_field(2.0, [1, 0], [0, 0], g)
    assert o2.extra["dirichlet"] == pytest.approx(8.0)
    assert o2.J_exact == pytest.approx(10.0)


def test_plane_outside_box():
    g = make_grid(2, -1, 2, 33)
    o = plane_field(1.0, [1, 0], [2, 0], g)
    assert o.J_exact == 0.0
    assert np.abs(o.field.values).max() == 0.0


def test_plane_tilted_area():
    g = make_grid(2, -1, 2, 33)
    nu = np.array([1.0, 1.0]) / np.sqrt(2)
    assert plane_field(1.0, nu, [0, 0], g).extra["positive_volume"] == pytest.approx(2.0)


def test_plane_rejects_non_unit():
    with pytest.raises(OracleError):
        plane_field(1.0, [2, 0], [0, 0], make_grid(2, -1, 2, 33))


def test_one_d_linear():
    o = one_d_exact(0.5, 1.0, 0.0)
    assert o.extra["x_star"] == pytest.approx(0.5)
    assert o.J_exact == pytest.approx(1.0)


def test_one_d_semilinear_root_and_ode():
    o = one_d_exact(0.5, 1.0, 0.2)
    xs = o.extra["x_star"]
    assert xs == pytest.approx(X_STAR_KAPPA_02, abs=1e-12)
    u, du = o.extra["u"], o.extra["du"]
    assert u(0.0) == pytest.approx(0.5, abs=1e-12)
    assert u(xs) == pytest.approx(0.0, abs=1e-12)
    assert du(xs) == pytest.approx(-1.0, abs=1e-12)


def test_one_d_kappa_continuity():
    assert one_d_exact(0.5, 1.0, 1e-7).extra["x_star"] == pytest.approx(0.5, abs=1e-6)


def test_one_d_with_lambda_solves_ode():
    o = one_d_exact(0.5, 1.0, 0.2, 0.1)
    u, xs = o.extra["u"], o.extra["x_star"]
    s = np.linspace(0.05, xs - 0.05, 7)
    d = 1e-4
    upp = (u(s + d) - 2 * u(s) + u(s - d)) / d**2
    np.testing.assert_allclose(-upp, 0.2 - 0.1 * u(s), atol=1e-5)
    assert u(0.0) == pytest.approx(0.5, abs=1e-12)


def test_one_d_domain_error():
    with pytest.raises(OracleError):
        one_d_exact(2.0, 1.0, 0.0)


def _spec(kappa, n=257, a=0.5):
    g = make_grid(1, 0, 1, n)
    F = NonlinearTerm("quadratic_affine", kappa=kappa, F0=max(2 * kappa, 0.0))
    return make_model(g, F=F, bc=BoundaryData(g.axes[0] == 0.0, np.full(g.shape, a)))


@pytest.mark.parametrize("kappa", [0.0, 0.2])
def test_brute_force_matches_exact(kappa):
    xs, J = one_d_brute_force(_spec(kappa), 10_000)
    o = one_d_exact(0.5, 1.0, kappa)
    assert xs == pytest.approx(o.extra["x_star"], abs=1e-4)
    assert J == pytest.approx(o.J_exact, rel=1e-6)


def test_brute_force_coarse_bracket():
    xs, _ = one_d_brute_force(_spec(0.0), 2)
    assert abs(xs - 0.5) <= 0.5


def test_brute_force_degenerate():
    xs, J = one_d_brute_force(_spec(0.0, a=0.0), 100)
    assert xs == 0.0 and J == 0.0


def test_radial_inverts_closed_form():
    a = 0.5 * np.log(0.5 / 0.2)
    o = radial_2d_exact(a, 1.0, 0.2, make_grid(2, -1, 2, 65))
    assert o.extra["rho_fb"] == pytest.approx(0.5, abs=1e-10)


def test_radial_degenerate_limit():
    o = radial_2d_exact(1e-9, 1.0, 0.2)
    assert o.extra["rho_fb"] == pytest.approx(0.2, abs=1e-6)


def test_radial_leaves_domain():
    with pytest.raises(OracleError):
        radial_2d_exact(5.0, 1.0, 0.2, make_grid(2, -1, 2, 33))
