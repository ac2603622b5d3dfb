import numpy as np
import pytest

from freebound.grid import ScalarField, make_grid
from freebound.levelset import extract_free_boundary
from freebound.minimizer import Solution, SolverConfig, SolverError, competitor_audit, solve
from freebound.model import Obstacle, make_model
from freebound.oracle import plane_field

from conftest import plane_model


def test_one_d_oracle(oned_solution):
    spec, sol = oned_solution
    assert sol.converged
    assert sol.fb.points.ravel() == pytest.approx([0.5], abs=0.01)
    assert sol.J == pytest.approx(1.0, abs=0.02)


def test_one_d_feasible(oned_solution):
    spec, sol = oned_solution
    u = sol.u.values
    assert u.min() >= 0.0
    assert np.all(u <= spec.psi_nodes)
    np.testing.assert_array_equal(u[spec.bc.mask], spec.bc.values[spec.bc.mask])


def test_smoothed_stage_energy_decreases(oned_solution):
    _, sol = oned_solution
    for stage in sol.smoothed_history:
        assert all(b <= a + 1e-12 * max(1.0, abs(a)) for a, b in zip(stage, stage[1:]))


def test_two_d_plane():
    spec = plane_model(129)
    sol = solve(spec)
    h = spec.grid.hmin
    exact = plane_field(1.0, [1, 0], [0, 0], spec.grid).field.values
    assert np.abs(sol.u.values - exact).max() <= 5 * h


def test_zero_data_gives_zero():
    g = make_grid(2, -1, 2, 33)
    sol = solve(make_model(g, psi=Obstacle("constant", M0=10.0)))
    assert np.abs(sol.u.values).max() == 0.0
    assert sol.J == 0.0
    assert sol.fb.empty


def test_solver_config_validation():
    with pytest.raises(SolverError):
        SolverConfig(eps_factor=1.5)
    with pytest.raises(SolverError):
        SolverConfig(seed_mode="custom")
    sched = SolverConfig().eps_schedule(0.01)
    assert sched[0] == pytest.approx(0.08)
    assert sched[-1] == pytest.approx(0.005)
    assert all(a > b for a, b in zip(sched, sched[1:]))


def test_audit_passes_on_oracle(oned_solution):
    spec, sol = oned_solution
    rep = competitor_audit(sol, spec, 200, seed=0)
    assert rep.trials == 200
    assert rep.violations == 0
    assert rep.tol == pytest.approx(1e-6 * sol.J, rel=0.01)


def test_audit_detects_perturbation(oned_solution):
    spec, sol = oned_solution
    x = spec.grid.axes[0]
    bad = Solution(ScalarField(spec.grid, sol.u.values + 0.1 * np.sin(np.pi * x)), sol.energy, 0, 0.0, sol.fb, eps=sol.eps)
    assert competitor_audit(bad, spec, 20, seed=0).violations >= 1


def test_audit_zero_trials(oned_solution):
    spec, sol = oned_solution
    rep = competitor_audit(sol, spec, 0)
    assert rep.trials == 0 and rep.violations == 0 and rep.passed


def test_audit_deterministic(oned_solution):
    spec, sol = oned_solution
    a = competitor_audit(sol, spec, 30, seed=3)
    b = competitor_audit(sol, spec, 30, seed=3)
    assert a.margins == b.margins and a.kinds == b.kinds


def test_extract_plane():
    g = make_grid(2, -1, 2, 129)
    fb = extract_free_boundary(plane_field(1.0, [1, 0], [0, 0], g).field, 1e-8)
    h = g.hmin
    assert np.abs(fb.points[:, 0]).max() <= h
    assert fb.measures.sum() == pytest.approx(2.0, abs=2 * h)


def test_extract_circle():
    g = make_grid(2, -1, 2, 129)
    u = ScalarField.from_function(g, lambda x: np.maximum(0.5 - np.linalg.norm(x, axis=-1), 0.0))
    fb = extract_free_boundary(u, 1e-8)
    assert fb.measures.sum() == pytest.approx(np.pi, rel=0.02)
    np.testing.assert_allclose(np.linalg.norm(fb.points, axis=-1), 0.5, atol=g.hmin)


def test_extract_empty():
    g = make_grid(2, -1, 2, 33)
    assert extract_free_boundary(ScalarField(g, np.ones(g.shape)), 1e-8).empty
