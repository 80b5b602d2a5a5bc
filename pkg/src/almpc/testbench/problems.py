"""Benchmark problems with analytic derivative hooks."""

from __future__ import annotations

import json
import math
from importlib import resources

import numpy as np
from scipy.optimize import fsolve

from ..problem import Problem, ProblemDims, register_problem


class _SetpointMixin:
    """Stores ``xdes``/``udes``; subclasses read them in cost hooks."""

    def _set(self, xdes, udes):
        self.xdes = np.asarray(xdes, dtype=float)
        self.udes = np.asarray(udes, dtype=float)


class _QuadraticNodes:
    """Vectorized node hooks for ``l = k * (|x - xdes|_Qx^2 + |u - udes|_Qu^2)``."""

    def _weights(self):
        raise NotImplementedError

    def l_nodes(self, X, U, p, t):
        k, qx, qu = self._weights()
        return k * (((X - self.xdes) ** 2) @ qx + ((U - self.udes) ** 2) @ qu)

    def dldx_nodes(self, X, U, p, t):
        k, qx, _ = self._weights()
        return 2.0 * k * qx * (X - self.xdes)

    def dldu_nodes(self, X, U, p, t):
        k, _, qu = self._weights()
        return 2.0 * k * qu * (U - self.udes)


@register_problem("ball-on-plate")
class BallOnPlate(_QuadraticNodes, _SetpointMixin, Problem):
    """Linear single-axis ball-on-plate model with box state limits."""

    name = "ball-on-plate"

    def __init__(self, user_params=(100.0, 10.0, 1.0, 100.0, 10.0, -0.2, 0.01, -0.1, 0.1)):
        super().__init__(np.asarray(user_params, dtype=float))
        self.dims = ProblemDims(Nx=2, Nu=1, Nh=4)
        self._set([-0.2, 0.0], [0.0])

    def nominal_state(self):
        return np.array([0.0, 0.02])

    def f(self, x, u, p, t):
        return np.array([x[1] - 0.04 * u[0], -7.01 * u[0]])

    def dfdx_mult(self, x, u, p, t, vec):
        return np.array([0.0, vec[0]])

    def dfdu_mult(self, x, u, p, t, vec):
        return np.array([-0.04 * vec[0] - 7.01 * vec[1]])

    def l(self, x, u, p, t):
        q = self.user_params
        dx, du = x - self.xdes, u - self.udes
        return 0.5 * (q[0] * dx[0] ** 2 + q[1] * dx[1] ** 2 + q[2] * du[0] ** 2)

    def dldx(self, x, u, p, t):
        q = self.user_params
        return np.array([q[0], q[1]]) * (x - self.xdes)

    def dldu(self, x, u, p, t):
        return self.user_params[2] * (u - self.udes)

    def V(self, x, p, T):
        q = self.user_params
        dx = x - self.xdes
        return 0.5 * (q[3] * dx[0] ** 2 + q[4] * dx[1] ** 2)

    def dVdx(self, x, p, T):
        q = self.user_params
        return np.array([q[3], q[4]]) * (x - self.xdes)

    def h(self, x, u, p, t):
        q = self.user_params
        return np.array([q[5] - x[0], -q[6] + x[0], q[7] - x[1], -q[8] + x[1]])

    def dhdx_mult(self, x, u, p, t, vec):
        return np.array([-vec[0] + vec[1], -vec[2] + vec[3]])

    def dhdu_mult(self, x, u, p, t, vec):
        return np.zeros(1)

    def _weights(self):
        q = self.user_params
        return 0.5, q[:2], q[2:3]

    def h_nodes(self, X, U, p, t):
        q = self.user_params
        return np.column_stack([q[5] - X[:, 0], X[:, 0] - q[6], q[7] - X[:, 1], X[:, 1] - q[8]])

    def dhdx_mult_nodes(self, X, U, p, t, W):
        return np.column_stack([W[:, 1] - W[:, 0], W[:, 3] - W[:, 2]])


@register_problem("crane2d")
class Crane2D(_QuadraticNodes, _SetpointMixin, Problem):
    """Overhead crane with rope-length control and an obstacle constraint.

    State ``[sC, vC, sR, vR, phi, omega]``; the cart acceleration ``u1`` also
    drives the pendulum equation.
    """

    name = "crane2d"

    def __init__(self, gravity: float = 9.81):
        super().__init__({"g": gravity})
        self.dims = ProblemDims(Nx=6, Nu=2, Nh=3)
        self.grav = gravity
        self.Q = np.array([1.0, 2.0, 2.0, 1.0, 1.0, 4.0])
        self.R = np.array([0.05, 0.05])
        self.omega_max = 0.3
        self._set([2.0, 0.0, 2.0, 0.0, 0.0, 0.0], [0.0, 0.0])

    def nominal_state(self):
        return np.array([0.5, 0.1, 1.5, 0.1, 0.2, 0.1])

    def f(self, x, u, p, t):
        sR, vR, phi, om = x[2], x[3], x[4], x[5]
        acc = -(self.grav * np.sin(phi) + u[0] * np.cos(phi) + 2.0 * vR * om) / sR
        return np.array([x[1], u[0], vR, u[1], om, acc])

    def dfdx_mult(self, x, u, p, t, vec):
        sR, vR, phi, om = x[2], x[3], x[4], x[5]
        s, c = np.sin(phi), np.cos(phi)
        num = self.grav * s + u[0] * c + 2.0 * vR * om
        v5 = vec[5]
        return np.array([
            0.0,
            vec[0],
            v5 * num / sR ** 2,
            vec[2] - v5 * 2.0 * om / sR,
            -v5 * (self.grav * c - u[0] * s) / sR,
            vec[4] - v5 * 2.0 * vR / sR,
        ])

    def dfdu_mult(self, x, u, p, t, vec):
        return np.array([vec[1] - vec[5] * np.cos(x[4]) / x[2], vec[3]])

    def l(self, x, u, p, t):
        dx, du = x - self.xdes, u - self.udes
        return float(self.Q @ dx ** 2 + self.R @ du ** 2)

    def dldx(self, x, u, p, t):
        return 2.0 * self.Q * (x - self.xdes)

    def dldu(self, x, u, p, t):
        return 2.0 * self.R * (u - self.udes)

    def h(self, x, u, p, t):
        sC, sR, phi, om = x[0], x[2], x[4], x[5]
        q = sC + np.sin(phi) * sR
        return np.array([np.cos(phi) * sR - 0.2 * q ** 2 - 1.25, om - self.omega_max, -om - self.omega_max])

    def dhdx_mult(self, x, u, p, t, vec):
        sC, sR, phi = x[0], x[2], x[4]
        s, c = np.sin(phi), np.cos(phi)
        q = sC + s * sR
        v0 = vec[0]
        return np.array([
            -0.4 * q * v0, 0.0, v0 * (c - 0.4 * q * s), 0.0, v0 * (-s * sR - 0.4 * q * c * sR), vec[1] - vec[2],
        ])

    def dhdu_mult(self, x, u, p, t, vec):
        return np.zeros(2)

    def _weights(self):
        return 1.0, self.Q, self.R

    def h_nodes(self, X, U, p, t):
        sC, sR, phi, om = X[:, 0], X[:, 2], X[:, 4], X[:, 5]
        q = sC + np.sin(phi) * sR
        return np.column_stack([np.cos(phi) * sR - 0.2 * q ** 2 - 1.25, om - self.omega_max, -om - self.omega_max])

    def dhdx_mult_nodes(self, X, U, p, t, W):
        sC, sR, phi = X[:, 0], X[:, 2], X[:, 4]
        s, c = np.sin(phi), np.cos(phi)
        q = sC + s * sR
        w0 = W[:, 0]
        zero = np.zeros_like(w0)
        return np.column_stack([-0.4 * q * w0, zero, w0 * (c - 0.4 * q * s), zero,
                                w0 * (-s * sR - 0.4 * q * c * sR), W[:, 1] - W[:, 2]])


@register_problem("double-integrator-shrinking")
class DoubleIntegratorShrinking(_SetpointMixin, Problem):
    """Time/energy optimal transfer of a double integrator into ``xdes``."""

    name = "double-integrator-shrinking"

    def __init__(self, r: float = 0.01):
        super().__init__({"r": r})
        self.r = r
        self.dims = ProblemDims(Nx=2, Nu=1, NgT=2)
        self._set([0.0, 0.0], [0.0])

    def f(self, x, u, p, t):
        return np.array([x[1], u[0]])

    def dfdx_mult(self, x, u, p, t, vec):
        return np.array([0.0, vec[0]])

    def dfdu_mult(self, x, u, p, t, vec):
        return np.array([vec[1]])

    def l(self, x, u, p, t):
        return 0.5 * self.r * float(u[0] ** 2)

    def dldx(self, x, u, p, t):
        return np.zeros(2)

    def dldu(self, x, u, p, t):
        return np.array([self.r * u[0]])

    def V(self, x, p, T):
        return float(T)

    def dVdx(self, x, p, T):
        return np.zeros(2)

    def dVdT(self, x, p, T):
        return 1.0

    def gT(self, x, p, T):
        return x - self.xdes

    def dgTdx_mult(self, x, p, T, vec):
        return np.asarray(vec, dtype=float).copy()

    def dgTdT_mult(self, x, p, T, vec):
        return 0.0


def _chain(angles, lengths):
    """Planar 3-link chain: tip position and its 2x3 Jacobian (scalar math, it is called per node)."""
    q1 = float(angles[0])
    q2 = q1 + float(angles[1])
    q3 = q2 + float(angles[2])
    a1, a2, a3 = float(lengths[0]), float(lengths[1]), float(lengths[2])
    c1, c2, c3 = a1 * math.cos(q1), a2 * math.cos(q2), a3 * math.cos(q3)
    s1, s2, s3 = a1 * math.sin(q1), a2 * math.sin(q2), a3 * math.sin(q3)
    # d(tip)/d(angle j) sums the links from j outwards
    return (np.array([c1 + c2 + c3, s1 + s2 + s3]),
            np.array([[-(s1 + s2 + s3), -(s2 + s3), -s3], [c1 + c2 + c3, c2 + c3, c3]]))


@register_problem("dual-arm-robot")
class DualArmRobot(Problem):
    """Two planar 3-link arms holding a common object (closed chain).

    The right arm's base sits at ``(1, 0)`` and its joint angles are measured
    from the negative x axis, so it mirrors the left arm.
    """

    name = "dual-arm-robot"

    def __init__(self, lengths=(0.25,) * 6):
        super().__init__({"a": tuple(lengths)})
        self.a = np.asarray(lengths, dtype=float)
        self.dims = ProblemDims(Nx=6, Nu=6, Ng=3, NgT=6)
        self.x0 = np.array([np.pi / 2, -np.pi / 2, 0.0, -np.pi / 2, np.pi / 2, 0.0])
        self.xf = np.array([-np.pi / 2, np.pi / 2, 0.0, np.pi / 2, -np.pi / 2, 0.0])

    def nominal_state(self):
        return self.x0 + 0.3

    def f(self, x, u, p, t):
        return np.asarray(u, dtype=float).copy()

    def dfdx_mult(self, x, u, p, t, vec):
        return np.zeros(6)

    def dfdu_mult(self, x, u, p, t, vec):
        return np.asarray(vec, dtype=float).copy()

    def l(self, x, u, p, t):
        return 0.5 * float(u @ u)

    def dldx(self, x, u, p, t):
        return np.zeros(6)

    def dldu(self, x, u, p, t):
        return np.asarray(u, dtype=float).copy()

    def p_left(self, x):
        pos, _ = _chain(x[:3], self.a[:3])
        return np.array([pos[0], pos[1], x[0] + x[1] + x[2]])

    def p_right(self, x):
        pos, _ = _chain(x[3:], self.a[3:])
        return np.array([1.0 - pos[0], -pos[1], x[3] + x[4] + x[5] - np.pi])

    def g(self, x, u, p, t):
        pl, _ = _chain(x[:3], self.a[:3])
        pr, _ = _chain(x[3:], self.a[3:])
        return np.array([pl[0] + pr[0] - 1.0, pl[1] + pr[1],
                         x[0] + x[1] + x[2] - x[3] - x[4] - x[5]])

    def dgdx_mult(self, x, u, p, t, vec):
        _, JL = _chain(x[:3], self.a[:3])
        _, JR = _chain(x[3:], self.a[3:])
        left = JL.T @ vec[:2] + vec[2]
        right = JR.T @ vec[:2] - vec[2]  # g = pL + chainR - const, so +JR on positions
        return np.concatenate([left, right])

    def dgdu_mult(self, x, u, p, t, vec):
        return np.zeros(6)

    def l_nodes(self, X, U, p, t):
        return 0.5 * np.sum(U * U, axis=1)

    def dldu_nodes(self, X, U, p, t):
        return np.array(U, dtype=float)

    @staticmethod
    def _chain_nodes(Q, a):
        cum = np.cumsum(Q, axis=1)
        c, s = a * np.cos(cum), a * np.sin(cum)
        tail_c = np.cumsum(c[:, ::-1], axis=1)[:, ::-1]
        tail_s = np.cumsum(s[:, ::-1], axis=1)[:, ::-1]
        return tail_c, tail_s  # column 0 is the tip position

    def g_nodes(self, X, U, p, t):
        lc, ls = self._chain_nodes(X[:, :3], self.a[:3])
        rc, rs = self._chain_nodes(X[:, 3:], self.a[3:])
        return np.column_stack([lc[:, 0] + rc[:, 0] - 1.0, ls[:, 0] + rs[:, 0],
                                X[:, :3].sum(axis=1) - X[:, 3:].sum(axis=1)])

    def dgdx_mult_nodes(self, X, U, p, t, W):
        lc, ls = self._chain_nodes(X[:, :3], self.a[:3])
        rc, rs = self._chain_nodes(X[:, 3:], self.a[3:])
        w0, w1, w2 = W[:, :1], W[:, 1:2], W[:, 2:3]
        left = -ls * w0 + lc * w1 + w2
        right = -rs * w0 + rc * w1 - w2
        return np.hstack([left, right])

    def gT(self, x, p, T):
        return x - self.xf

    def dgTdx_mult(self, x, p, T, vec):
        return np.asarray(vec, dtype=float).copy()


def load_cstr_data() -> dict:
    text = resources.files("almpc.testbench").joinpath("data/cstr.json").read_text()
    return json.loads(text)


@register_problem("cstr")
class Cstr(_QuadraticNodes, _SetpointMixin, Problem):
    """Continuously stirred tank reactor (A -> B -> C, 2A -> D).

    State ``[cA, cB, T, TC]`` in mol/m^3 and degC, time in seconds; controls
    are the normalized inflow ``u1`` [1/h] and the cooling power ``u2`` [kJ/h].
    Measured outputs are the two temperatures.
    """

    name = "cstr"

    def __init__(self, data: dict | None = None):
        data = load_cstr_data() if data is None else data
        super().__init__(data)
        pr = data["parameters"]
        hour = 3600.0
        self.k10 = pr["k10_per_h"] / hour
        self.k20 = pr["k20_l_per_mol_h"] / 1000.0 / hour  # m^3/(mol s)
        self.E1 = pr["E1_over_R_K"]
        self.E2 = pr["E2_over_R_K"]
        self.dHAB, self.dHBC, self.dHAD = pr["dH_AB_kJ_per_mol"], pr["dH_BC_kJ_per_mol"], pr["dH_AD_kJ_per_mol"]
        rho, cp = pr["rho_kg_per_l"], pr["cp_kJ_per_kg_K"]
        kw, AR, VR = pr["kw_kJ_per_h_m2_K"], pr["AR_m2"], pr["VR_l"]
        mK, cpK = pr["mK_kg"], pr["cpK_kJ_per_kg_K"]
        self.delta = 1.0 / (rho * cp * 1000.0)  # K m^3 / kJ
        self.alpha = kw * AR / (rho * cp * VR) / hour
        self.beta = kw * AR / (mK * cpK) / hour
        self.gamma = 1.0 / (mK * cpK) / hour
        self.c_in = pr["c_in_mol_per_l"] * 1000.0
        self.T_in = pr["T_in_C"]
        self.u_hour = 1.0 / hour  # u1 is given per hour
        self.dims = ProblemDims(Nx=4, Nu=2)
        mpc = data["mpc"]
        self.Q = np.asarray(mpc["Q"], dtype=float)
        self.R = np.asarray(mpc["R"], dtype=float)
        self.P = np.asarray(mpc["P"], dtype=float)
        u_a = np.asarray(data["setpoints"][0]["u"], dtype=float)
        self._set(self.steady_state(u_a), u_a)

    def nominal_state(self):
        return np.array([2000.0, 1000.0, 110.0, 105.0])

    def nominal_control(self):
        return np.array([15.0, -2000.0])

    def _rates(self, T):
        TK = T + 273.15
        k1 = self.k10 * np.exp(self.E1 / TK)
        k2 = self.k20 * np.exp(self.E2 / TK)
        dk1 = k1 * (-self.E1 / TK ** 2)
        dk2 = k2 * (-self.E2 / TK ** 2)
        return k1, k2, dk1, dk2

    def f(self, x, u, p, t):
        cA, cB, T, TC = x
        k1, k2, _, _ = self._rates(T)
        u1 = u[0] * self.u_hour
        heat = k1 * cA * self.dHAB + k1 * cB * self.dHBC + k2 * cA ** 2 * self.dHAD
        return np.array([
            -k1 * cA - k2 * cA ** 2 + (self.c_in - cA) * u1,
            k1 * cA - k1 * cB - cB * u1,
            -self.delta * heat + self.alpha * (TC - T) + (self.T_in - T) * u1,
            self.beta * (T - TC) + self.gamma * u[1],
        ])

    def dfdx_mult(self, x, u, p, t, vec):
        cA, cB, T, TC = x
        k1, k2, dk1, dk2 = self._rates(T)
        u1 = u[0] * self.u_hour
        d = self.delta
        # rows of the Jacobian
        J = np.array([
            [-k1 - 2 * k2 * cA - u1, 0.0, -dk1 * cA - dk2 * cA ** 2, 0.0],
            [k1, -k1 - u1, dk1 * (cA - cB), 0.0],
            [-d * (k1 * self.dHAB + 2 * k2 * cA * self.dHAD), -d * k1 * self.dHBC,
             -d * (dk1 * cA * self.dHAB + dk1 * cB * self.dHBC + dk2 * cA ** 2 * self.dHAD) - self.alpha - u1,
             self.alpha],
            [0.0, 0.0, self.beta, -self.beta],
        ])
        return J.T @ vec

    def dfdu_mult(self, x, u, p, t, vec):
        cA, cB, T, _ = x
        h = self.u_hour
        return np.array([h * ((self.c_in - cA) * vec[0] - cB * vec[1] + (self.T_in - T) * vec[2]),
                         self.gamma * vec[3]])

    def l(self, x, u, p, t):
        dx, du = x - self.xdes, u - self.udes
        return float(self.Q @ dx ** 2 + self.R @ du ** 2)

    def dldx(self, x, u, p, t):
        return 2.0 * self.Q * (x - self.xdes)

    def dldu(self, x, u, p, t):
        return 2.0 * self.R * (u - self.udes)

    def _weights(self):
        return 1.0, self.Q, self.R

    def V(self, x, p, T):
        dx = x - self.xdes
        return float(self.P @ dx ** 2)

    def dVdx(self, x, p, T):
        return 2.0 * self.P * (x - self.xdes)

    # measured outputs
    def output(self, x):
        return np.array([x[2], x[3]])

    def doutput_mult(self, x, vec):
        return np.array([0.0, 0.0, vec[0], vec[1]])

    def steady_state(self, u, guess=None) -> np.ndarray:
        """Equilibrium for constant input ``u`` (scaled Newton solve)."""
        guess = self.nominal_state() if guess is None else np.asarray(guess, dtype=float)
        scale = np.array([1000.0, 1000.0, 100.0, 100.0])
        sol, info, ier, msg = fsolve(lambda z: self.f(z * scale, u, None, 0.0) * 3600.0 / scale, guess / scale,
                                     full_output=True, xtol=1e-13)
        if ier != 1:
            raise RuntimeError(f"steady state not found: {msg}")
        return sol * scale
