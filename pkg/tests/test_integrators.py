import numpy as np
import pytest

from almpc.augmented import MultiplierState
from almpc.errors import NumericalFailure
from almpc.integrators import Grid, IntegratorChoice, integrate_adjoint, integrate_forward, quadrature
from almpc.problem import Problem, ProblemDims

from conftest import ScalarLQ

RK45 = IntegratorChoice("rk45_adaptive", rel_tol=1e-10, abs_tol=1e-12)


class Linear(Problem):
    """xdot = a x + u (scalar), optional mass factor m and quadratic terminal cost."""

    def __init__(self, a=0.0, m=None):
        super().__init__()
        self.a = a
        self.dims = ProblemDims(Nx=1, Nu=1)
        if m is not None:
            self.mass_matrix = np.array([[m]])

    def f(self, x, u, p, t):
        return np.array([self.a * x[0] + u[0]])

    def dfdx_mult(self, x, u, p, t, vec):
        return np.array([self.a * vec[0]])

    def dfdu_mult(self, x, u, p, t, vec):
        return np.array([vec[0]])

    def V(self, x, p, T):
        return 0.5 * float(x[0] ** 2)

    def dVdx(self, x, p, T):
        return np.array([x[0]])


class Zero(Problem):
    def __init__(self):
        super().__init__()
        self.dims = ProblemDims(Nx=2, Nu=1)

    def f(self, x, u, p, t):
        return np.zeros(2)

    def dfdx_mult(self, x, u, p, t, vec):
        return np.zeros(2)

    def dfdu_mult(self, x, u, p, t, vec):
        return np.zeros(1)


def _mult(pb, N):
    return MultiplierState.initial(pb.dims, N)


def test_grid_nodes():
    g = Grid(5, 2.0)
    np.testing.assert_allclose(g.t, [0.0, 0.5, 1.0, 1.5, 2.0])
    assert g.step == 0.5
    with pytest.raises(ValueError):
        Grid(1, 1.0)
    with pytest.raises(ValueError):
        Grid(3, 0.0)


def test_integrator_choice_rejects_bad_input():
    with pytest.raises(ValueError):
        IntegratorChoice("rk4")
    with pytest.raises(ValueError):
        IntegratorChoice("rk45_adaptive", rel_tol=0.0)


@pytest.mark.parametrize("method", ["euler", "modified_euler", "heun", "rk45_adaptive"])
def test_zero_field_keeps_state(method):
    x = integrate_forward(Zero(), Grid(6, 1.0), np.zeros((6, 1)), np.zeros(0), np.array([1.0, 2.0]),
                          IntegratorChoice(method))
    np.testing.assert_array_equal(x, np.tile([1.0, 2.0], (6, 1)))


def test_heun_exact_on_linear_solution():
    x = integrate_forward(Linear(), Grid(11, 1.0), np.ones((11, 1)), np.zeros(0), np.zeros(1))
    assert x[-1, 0] == pytest.approx(1.0, abs=1e-15)


def test_rk45_exponential_decay():
    x = integrate_forward(Linear(a=-1.0), Grid(5, 1.0), np.zeros((5, 1)), np.zeros(0), np.ones(1),
                          IntegratorChoice("rk45_adaptive", rel_tol=1e-8, abs_tol=1e-10))
    assert x[-1, 0] == pytest.approx(np.exp(-1.0), rel=1e-7)


@pytest.mark.parametrize("method,factor", [("euler", 1.9), ("heun", 3.8), ("modified_euler", 3.8)])
def test_order_of_accuracy(method, factor):
    pb = Linear(a=-1.0)

    def err(N):
        t = np.linspace(0.0, 1.0, N)
        u = np.sin(t)[:, None]
        x = integrate_forward(pb, Grid(N, 1.0), u, np.zeros(0), np.ones(1), IntegratorChoice(method))
        exact = 1.5 * np.exp(-1.0) + 0.5 * (np.sin(1.0) - np.cos(1.0))
        return abs(x[-1, 0] - exact)

    assert err(21) / err(41) >= factor


def test_mass_matrix_halves_rate():
    u = np.ones((11, 1))
    x1 = integrate_forward(Linear(), Grid(11, 1.0), u, np.zeros(0), np.zeros(1))
    x2 = integrate_forward(Linear(m=2.0), Grid(11, 1.0), u, np.zeros(0), np.zeros(1))
    np.testing.assert_allclose(x2, 0.5 * x1, rtol=1e-14)


def test_forward_non_finite_raises_with_node():
    class Blowup(Linear):
        def f(self, x, u, p, t):
            return np.array([np.inf if t > 0.4 else 1.0])

    with pytest.raises(NumericalFailure) as err:
        integrate_forward(Blowup(), Grid(6, 1.0), np.zeros((6, 1)), np.zeros(0), np.zeros(1))
    assert err.value.index is not None


def test_adjoint_terminal_condition_quadratic_cost():
    pb = Zero()
    pb.V = lambda x, p, T: 0.5 * float(x @ x)
    pb.dVdx = lambda x, p, T: np.asarray(x, dtype=float)
    grid = Grid(4, 1.0)
    x = np.tile([0.3, -0.7], (4, 1))
    lam = integrate_adjoint(pb, grid, x, np.zeros((4, 1)), np.zeros(0), _mult(pb, 4))
    np.testing.assert_allclose(lam, x)


def test_adjoint_constant_without_state_dependence():
    pb = Linear(a=0.0)
    grid = Grid(9, 2.0)
    x = np.linspace(0.0, 1.0, 9)[:, None]
    lam = integrate_adjoint(pb, grid, x, np.zeros((9, 1)), np.zeros(0), _mult(pb, 9))
    np.testing.assert_allclose(lam, np.full((9, 1), x[-1, 0]))


def test_adjoint_matches_closed_form_lq():
    a, q, s, x0, T = -0.5, 1.0, 2.0, 1.5, 1.0
    pb = ScalarLQ(a=a, q=q, s=s)
    N = 201  # x is linearly interpolated between nodes
    grid = Grid(N, T)
    t = grid.t
    x = (x0 * np.exp(a * t))[:, None]
    lam = integrate_adjoint(pb, grid, x, np.zeros((N, 1)), np.zeros(0), _mult(pb, N), RK45)
    exact = (np.exp(a * (T - t)) * s * x0 * np.exp(a * T)
             + q * x0 * np.exp(-a * t) * (np.exp(2 * a * T) - np.exp(2 * a * t)) / (2 * a))
    np.testing.assert_allclose(lam[:, 0], exact, rtol=1e-6)


def test_quadrature_examples():
    assert quadrature(Grid(7, 2.0), np.ones(7)) == pytest.approx(2.0, abs=1e-15)
    for N in (2, 3, 10):
        g = Grid(N, 1.0)
        assert quadrature(g, g.t) == pytest.approx(0.5, abs=1e-15)
    g = Grid(101, 1.0)
    assert abs(quadrature(g, g.t ** 2) - 1.0 / 3.0) < 1e-4


def test_quadrature_vector_samples():
    g = Grid(5, 1.0)
    np.testing.assert_allclose(quadrature(g, np.column_stack([np.ones(5), g.t])), [1.0, 0.5])
    with pytest.raises(ValueError):
        quadrature(g, np.ones(4))
