import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from freebound.grid import make_grid
from freebound.model import (
    BoundaryData,
    ForceField,
    ModelError,
    NonlinearTerm,
    Obstacle,
    make_model,
    plane_trace,
    trace_boundary,
    validate_model,
)


@pytest.fixture
def grid():
    return make_grid(2, -1, 2, 33)


def test_quadratic_affine_values():
    F = NonlinearTerm("quadratic_affine", kappa=0.3, lam=0.1, F0=0.4)
    assert F.f(0.0) == pytest.approx(0.3)
    assert F.F(1.0) == pytest.approx(-0.5)
    assert F.f(1.0) == pytest.approx(0.2)


def test_tabulated_square():
    F = NonlinearTerm("tabulated", knots=(-1, 0, 1, 2, 3), values=(1, 0, 1, 4, 9), F0=2.5)
    assert F.F(0.0) == pytest.approx(0.0, abs=1e-12)
    assert F.f(2.0) == pytest.approx(-2.0, abs=0.1)


def test_tabulated_needs_knots():
    with pytest.raises(ModelError):
        NonlinearTerm("tabulated", knots=(0, 1), values=(0, 1))


def test_unknown_kinds():
    with pytest.raises(ModelError):
        NonlinearTerm("cubic")
    with pytest.raises(ModelError):
        ForceField("holder_radial", exponent=1.5)
    with pytest.raises(ModelError):
        Obstacle("constant", M0=0.0)


@settings(max_examples=40, deadline=None)
@given(kappa=st.floats(0, 1), lam=st.floats(0, 1), t=st.floats(-3, 3))
def test_f_is_minus_half_F_prime(kappa, lam, t):
    F = NonlinearTerm("quadratic_affine", kappa=kappa, lam=lam, F0=2.0)
    d = 1e-6
    fd = (F.F(t + d) - F.F(t - d)) / (2 * d)
    assert F.f(t) == pytest.approx(-0.5 * fd, abs=1e-6)


def test_force_fields():
    x = np.array([[0.0, 0.0], [0.3, 0.4]])
    assert ForceField("affine", q0=1.0, slope=(1.0, 0.0))(x) == pytest.approx([1.0, 1.3])
    assert ForceField("holder_radial", q0=1.0, amplitude=0.1, exponent=0.5)(x) == pytest.approx([1.0, 1.0 + 0.1 * 0.5**0.5])


def test_zero_plane_constant_obstacle_passes(grid):
    bc = trace_boundary(grid, "all", plane_trace(0.5))
    rep = validate_model(make_model(grid, psi=Obstacle("constant", M0=10.0), bc=bc))
    assert rep.ok, rep.failed()


def test_lambda_above_half_F0_fails(grid):
    F = NonlinearTerm("quadratic_affine", kappa=0.2, lam=0.6, F0=1.0)
    rep = validate_model(make_model(grid, F=F))
    assert "F''<=F0" in rep.failed()
    assert rep["F''<=F0"].worst == pytest.approx(1.2)


def test_obstacle_supersolution(grid):
    F = NonlinearTerm("quadratic_affine", kappa=0.2, F0=0.4)
    bad = validate_model(make_model(grid, F=F, psi=Obstacle("constant", M0=10.0)))
    assert bad.failed() == ["Laplace(Psi)+f(Psi)<=0"]
    assert bad["Laplace(Psi)+f(Psi)<=0"].worst == pytest.approx(0.2)
    good = validate_model(make_model(grid, F=F, psi=Obstacle("paraboloid", M0=10.0, curvature=0.2)))
    assert good.ok


def test_empty_dirichlet_set_fails(grid):
    bc = BoundaryData(np.zeros(grid.shape, bool), np.zeros(grid.shape))
    assert "S nonempty" in validate_model(make_model(grid, bc=bc)).failed()


def test_boundary_above_obstacle_fails(grid):
    bc = trace_boundary(grid, "all", lambda x: np.full(x.shape[:-1], 20.0))
    assert "u0<=Psi on S" in validate_model(make_model(grid, bc=bc)).failed()
