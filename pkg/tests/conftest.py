import numpy as np
import pytest

from freebound.grid import make_grid
from freebound.minimizer import solve
from freebound.model import BoundaryData, ForceField, NonlinearTerm, Obstacle, make_model, plane_trace, trace_boundary


def acceptance_model(n):
    """Plane trace on (-1,1)^2 with kappa=0.2 and a Hölder-radial Q (beta=0.5, amplitude 0.1)."""
    g = make_grid(2, (-1, -1), (2, 2), n)
    bc = trace_boundary(g, "all", plane_trace())
    F = NonlinearTerm("quadratic_affine", kappa=0.2, F0=0.4)
    Q = ForceField("holder_radial", q0=1.0, amplitude=0.1, exponent=0.5)
    return make_model(g, F=F, Q=Q, psi=Obstacle("paraboloid", M0=2.0, curvature=0.2), bc=bc)


def one_d_model(n=257, a=0.5, F=None):
    g = make_grid(1, 0.0, 1.0, n)
    bc = BoundaryData(g.points[..., 0] == 0.0, np.full(g.shape, a))
    return make_model(g, F=F, bc=bc)


def plane_model(n):
    g = make_grid(2, (-1, -1), (2, 2), n)
    return make_model(g, psi=Obstacle("constant", M0=10.0), bc=trace_boundary(g, "all", plane_trace()))


@pytest.fixture(scope="session")
def acc64():
    spec = acceptance_model(129)
    return spec, solve(spec)


@pytest.fixture(scope="session")
def acc128():
    spec = acceptance_model(257)
    return spec, solve(spec)


@pytest.fixture(scope="session")
def oned_solution():
    spec = one_d_model()
    return spec, solve(spec)


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
