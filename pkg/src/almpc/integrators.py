"""Forward state, backward adjoint and quadrature on a uniform horizon grid.

Fixed-step methods take exactly one step per grid interval.  The adaptive
Dormand-Prince method substeps inside every interval and restarts at each
node; only node values are stored.  Controls, multipliers and (for the
adjoint) states are linearly interpolated between nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .augmented import Augmented, MultiplierState
from .errors import NumericalFailure
from .problem import Problem

METHODS = ("euler", "modified_euler", "heun", "rk45_adaptive")


@dataclass(frozen=True)
class Grid:
    N: int
    T: float

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("grid needs at least two points")
        if not self.T > 0:
            raise ValueError("horizon length must be positive")

    @property
    def step(self) -> float:
        return self.T / (self.N - 1)

    @property
    def t(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.N)


@dataclass(frozen=True)
class IntegratorChoice:
    method: str = "heun"
    rel_tol: float = 1e-6
    abs_tol: float = 1e-8
    min_step: float = 1e-12

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown integrator {self.method!r}; choose from {METHODS}")
        if self.rel_tol <= 0 or self.abs_tol <= 0 or self.min_step <= 0:
            raise ValueError("integrator tolerances must be positive")


HEUN = IntegratorChoice("heun")

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = _B - np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])


def dopri_interval(rhs, t0, t1, y0, h_try, choice: IntegratorChoice):
    """Integrate ``y' = rhs(t, y)`` from ``t0`` to ``t1`` (either direction).

    Returns ``(y1, h_last)`` where ``h_last`` is a good first step for the
    following interval.
    """
    span = t1 - t0
    direction = 1.0 if span > 0 else -1.0
    total = abs(span)
    h = min(abs(h_try), total) if h_try else total
    s = 0.0
    y = np.asarray(y0, dtype=float)
    k1 = rhs(t0, y)
    while s < total:
        if total - s <= h * (1 + 1e-12):
            h = total - s
            last = True
        else:
            last = False
        t = t0 + direction * s
        hh = direction * h
        ks = [k1]
        for i in range(1, 7):
            yi = y + hh * sum(a * k for a, k in zip(_A[i], ks))
            ks.append(rhs(t + _C[i] * hh, yi))
        y_new = y + hh * sum(b * k for b, k in zip(_B[:6], ks[:6]))
        err_vec = hh * sum(e * k for e, k in zip(_E, ks))
        sc = choice.abs_tol + choice.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.sqrt(np.mean((err_vec / sc) ** 2))) if y.size else 0.0
        if not np.isfinite(err):
            err = np.inf
        if err <= 1.0:
            s = total if last else s + h
            y = y_new
            k1 = ks[6]
            factor = 5.0 if err == 0 else min(5.0, 0.9 * err ** -0.2)
            h_next = h * factor
            if last:
                return y, max(h_next, h)
            h = h_next
        else:
            h = h * max(0.2, 0.9 * err ** -0.2) if np.isfinite(err) else 0.2 * h
            if h < choice.min_step:
                raise NumericalFailure(f"adaptive step underflow at t={t:.6g}")
    return y, h


def _check_finite(traj, what):
    bad = ~np.isfinite(traj)
    if bad.any():
        node = int(np.flatnonzero(bad.any(axis=1))[0])
        raise NumericalFailure(f"non-finite {what} at grid node {node}", index=node)


def integrate_forward(problem: Problem, grid: Grid, u_traj, p, x0, choice: IntegratorChoice = HEUN):
    """State trajectory on ``grid`` solving ``M xdot = f(x, u, p, t)``, ``x(0) = x0``."""
    u_traj = np.asarray(u_traj, dtype=float)
    N, h = grid.N, grid.step
    t = grid.t
    X = np.empty((N, problem.dims.Nx))
    X[0] = x0
    f = problem.f
    mass = problem.mass
    if mass.identity:
        def rhs(x, u, tt):
            return f(x, u, p, tt)
    else:
        def rhs(x, u, tt):
            return mass.solve(f(x, u, p, tt))

    method = choice.method
    with np.errstate(all="ignore"):
        if method == "euler":
            for k in range(N - 1):
                X[k + 1] = X[k] + h * rhs(X[k], u_traj[k], t[k])
        elif method == "modified_euler":
            for k in range(N - 1):
                k1 = rhs(X[k], u_traj[k], t[k])
                um = 0.5 * (u_traj[k] + u_traj[k + 1])
                X[k + 1] = X[k] + h * rhs(X[k] + 0.5 * h * k1, um, t[k] + 0.5 * h)
        elif method == "heun":
            for k in range(N - 1):
                k1 = rhs(X[k], u_traj[k], t[k])
                k2 = rhs(X[k] + h * k1, u_traj[k + 1], t[k + 1])
                X[k + 1] = X[k] + 0.5 * h * (k1 + k2)
        else:
            h_try = h
            for k in range(N - 1):
                uk, uk1, tk = u_traj[k], u_traj[k + 1], t[k]

                def fun(tt, x, uk=uk, uk1=uk1, tk=tk):
                    theta = (tt - tk) / h
                    return rhs(x, uk + theta * (uk1 - uk), tt)

                X[k + 1], h_try = dopri_interval(fun, t[k], t[k + 1], X[k], h_try, choice)
    _check_finite(X, "state")
    return X


def integrate_adjoint(problem: Problem, grid: Grid, x_traj, u_traj, p, mult: MultiplierState,
                      choice: IntegratorChoice = HEUN, aug: Augmented | None = None, static_x=None):
    """Adjoint trajectory from ``M^T lam' = -H_x`` with ``M^T lam(T) = Vbar_x``.

    ``static_x`` optionally supplies the adjoint-independent part of ``H_x``
    at the nodes (see :meth:`Augmented.static_parts`).
    """
    aug = aug or Augmented(problem)
    N, h, T = grid.N, grid.step, grid.T
    t = grid.t
    mass = problem.mass
    L = np.empty((N, problem.dims.Nx))
    L[-1] = mass.solve_T(aug.Vbar_x(x_traj[-1], p, T, mult))
    Hx = aug.H_x
    if static_x is None and choice.method in ("euler", "heun"):
        static_x, _ = aug.static_parts(x_traj, u_traj, p, t, mult, with_u=False)
    dfdx_mult = problem.dfdx_mult

    def G(k, lam):
        # -lam' at node k
        return mass.solve_T(static_x[k] + dfdx_mult(x_traj[k], u_traj[k], p, t[k], lam))

    method = choice.method
    with np.errstate(all="ignore"):
        if method == "euler":
            for k in range(N - 2, -1, -1):
                L[k] = L[k + 1] + h * G(k + 1, L[k + 1])
        elif method == "heun":
            for k in range(N - 2, -1, -1):
                k1 = G(k + 1, L[k + 1])
                k2 = G(k, L[k + 1] + h * k1)
                L[k] = L[k + 1] + 0.5 * h * (k1 + k2)
        elif method == "modified_euler":
            for k in range(N - 2, -1, -1):
                k1 = G(k + 1, L[k + 1])
                lm = L[k + 1] + 0.5 * h * k1
                xm = 0.5 * (x_traj[k] + x_traj[k + 1])
                um = 0.5 * (u_traj[k] + u_traj[k + 1])
                km = mass.solve_T(Hx(xm, um, p, t[k] + 0.5 * h, lm, mult.between(k, 0.5)))
                L[k] = L[k + 1] + h * km
        else:
            h_try = h
            for k in range(N - 2, -1, -1):
                xk, xk1, uk, uk1, tk = x_traj[k], x_traj[k + 1], u_traj[k], u_traj[k + 1], t[k]

                def fun(tt, lam, k=k, xk=xk, xk1=xk1, uk=uk, uk1=uk1, tk=tk):
                    theta = min(max((tt - tk) / h, 0.0), 1.0)
                    xx = xk + theta * (xk1 - xk)
                    uu = uk + theta * (uk1 - uk)
                    return -mass.solve_T(Hx(xx, uu, p, tt, lam, mult.between(k, theta)))

                L[k], h_try = dopri_interval(fun, t[k + 1], t[k], L[k + 1], h_try, choice)
    _check_finite(L, "adjoint")
    return L


def quadrature(grid: Grid, samples) -> float | np.ndarray:
    """Trapezoidal rule over the uniform grid (samples along axis 0)."""
    samples = np.asarray(samples, dtype=float)
    if samples.shape[0] != grid.N:
        raise ValueError("samples do not match the grid")
    total = samples.sum(axis=0) - 0.5 * (samples[0] + samples[-1])
    return total * grid.step


def trapezoid_weights(grid: Grid) -> np.ndarray:
    w = np.full(grid.N, grid.step)
    w[0] = w[-1] = 0.5 * grid.step
    return w
