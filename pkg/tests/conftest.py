"""Small reference problems with closed-form answers."""

import numpy as np
import pytest

from almpc.problem import Bounds, Problem, ProblemDims


class Integrator1D(Problem):
    """xdot = u, l = u^2/2, V = s/2 x(T)^2: optimal u is constant -s x0 / (1 + s T)."""

    name = "integrator-1d"

    def __init__(self, s=1.0):
        super().__init__()
        self.s = s
        self.dims = ProblemDims(Nx=1, Nu=1)

    def f(self, x, u, p, t):
        return np.array([u[0]])

    def dfdx_mult(self, x, u, p, t, vec):
        return np.zeros(1)

    def dfdu_mult(self, x, u, p, t, vec):
        return np.array([vec[0]])

    def l(self, x, u, p, t):
        return 0.5 * float(u[0] ** 2)

    def dldx(self, x, u, p, t):
        return np.zeros(1)

    def dldu(self, x, u, p, t):
        return np.array([u[0]])

    def V(self, x, p, T):
        return 0.5 * self.s * float(x[0] ** 2)

    def dVdx(self, x, p, T):
        return np.array([self.s * x[0]])

    @staticmethod
    def optimum(x0, s, T):
        return -s * x0 / (1.0 + s * T)


class ScalarLQ(Problem):
    """xdot = a x + b u, l = (q x^2 + r u^2)/2, V = s/2 x(T)^2."""

    name = "scalar-lq"

    def __init__(self, a=-0.5, b=1.0, q=1.0, r=0.5, s=2.0):
        super().__init__()
        self.a, self.b, self.q, self.r, self.s = a, b, q, r, s
        self.dims = ProblemDims(Nx=1, Nu=1)

    def f(self, x, u, p, t):
        return np.array([self.a * x[0] + self.b * u[0]])

    def dfdx_mult(self, x, u, p, t, vec):
        return np.array([self.a * vec[0]])

    def dfdu_mult(self, x, u, p, t, vec):
        return np.array([self.b * vec[0]])

    def l(self, x, u, p, t):
        return 0.5 * (self.q * x[0] ** 2 + self.r * u[0] ** 2)

    def dldx(self, x, u, p, t):
        return np.array([self.q * x[0]])

    def dldu(self, x, u, p, t):
        return np.array([self.r * u[0]])

    def V(self, x, p, T):
        return 0.5 * self.s * float(x[0] ** 2)

    def dVdx(self, x, p, T):
        return np.array([self.s * x[0]])


class DoubleIntegratorOCP(Problem):
    """Rest-to-rest transfer with terminal equality x(T) = xdes and u in [-1, 1]."""

    name = "double-integrator-ocp"

    def __init__(self, xdes=(1.0, 0.0)):
        super().__init__()
        self.xdes = np.asarray(xdes, dtype=float)
        self.dims = ProblemDims(Nx=2, Nu=1, NgT=2)

    def f(self, x, u, p, t):
        return np.array([x[1], u[0]])

    def dfdx_mult(self, x, u, p, t, vec):
        return np.array([0.0, vec[0]])

    def dfdu_mult(self, x, u, p, t, vec):
        return np.array([vec[1]])

    def l(self, x, u, p, t):
        return 0.5 * float(u[0] ** 2)

    def dldx(self, x, u, p, t):
        return np.zeros(2)

    def dldu(self, x, u, p, t):
        return np.array([u[0]])

    def gT(self, x, p, T):
        return x - self.xdes

    def dgTdx_mult(self, x, p, T, vec):
        return np.asarray(vec, dtype=float).copy()


def free_bounds(dims, umax=np.inf):
    return Bounds.for_dims(dims, umax=umax)


@pytest.fixture
def integrator1d():
    return Integrator1D()


@pytest.fixture
def scalar_lq():
    return ScalarLQ()


# --- acceptance report -------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
