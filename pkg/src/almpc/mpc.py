"""Receding-horizon drivers: MPC with warm start, shrinking horizon, and MHE."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .augmented import MultiplierState
from .auglag import Residuals, SolverSolution, solve
from .errors import ConfigError, InsufficientData, NumericalFailure
from .gradient import DecisionPoint, Workspace
from .integrators import Grid
from .options import SolverOptions
from .problem import Bounds, Problem, ProblemDims, ScaledProblem, scale_to_internal, unscale_from_internal


def shift_trajectory(traj, T_old: float, T_new: float, dt: float) -> np.ndarray:
    """Values ``traj(tau + dt)`` on the uniform grid of ``T_new``; the tail is held."""
    traj = np.asarray(traj, dtype=float)
    N = traj.shape[0]
    if traj.ndim != 2 or traj.shape[1] == 0:
        return traj.copy()
    t_old = np.linspace(0.0, T_old, N)
    t_query = np.linspace(0.0, T_new, N) + dt
    return np.column_stack([np.interp(t_query, t_old, traj[:, i]) for i in range(traj.shape[1])])


def shift_multipliers(mult: MultiplierState, T_old: float, T_new: float, dt: float) -> MultiplierState:
    out = mult.copy()
    for name in ("mu_g", "c_g", "mu_h", "c_h"):
        setattr(out, name, shift_trajectory(getattr(mult, name), T_old, T_new, dt))
    return out


def _shift_residuals(res: Residuals, T_new: float, dt: float) -> Residuals:
    return Residuals(shift_trajectory(res.g, res.T, T_new, dt), shift_trajectory(res.hbar, res.T, T_new, dt),
                     res.gT, res.hbarT, T_new)


@dataclass
class StepInfo:
    u_applied: np.ndarray
    solution: SolverSolution
    T: float
    stopped: bool
    wall_time: float
    u_traj: np.ndarray = field(repr=False, default=None)
    x_traj: np.ndarray = field(repr=False, default=None)


class MpcController:
    """Fixed or shrinking horizon MPC around the augmented Lagrangian solver.

    Scaling vectors in ``opts`` (``xScale`` ...) switch the solver to scaled
    coordinates; inputs and outputs of :meth:`step` stay physical.
    """

    def __init__(self, problem: Problem, bounds: Bounds, opts: SolverOptions, shrinking: bool = False,
                 u_init=None, p_init=None):
        opts.validate(problem.dims)
        if shrinking and not opts.optimize_T:
            opts = replace(opts, optimize_T=True)
        if not opts.dt <= opts.T and not shrinking:
            raise ConfigError("need 0 < dt <= T")
        self.base = problem
        self.opts = opts
        self.shrinking = shrinking
        bounds = replace(bounds, x_scale=opts.x_scale, x_offset=opts.x_offset, u_scale=opts.u_scale,
                         u_offset=opts.u_offset)
        if shrinking or opts.optimize_T:
            bounds = replace(bounds, T_min=opts.T_min, T_max=opts.T_max)
        self.phys_bounds = bounds
        self.scaled = any(v is not None for v in (opts.x_scale, opts.x_offset, opts.u_scale, opts.u_offset))
        if self.scaled:
            self.problem = ScaledProblem(problem, bounds)
            self.bounds = self.problem.scaled_bounds(bounds)
        else:
            self.problem = problem
            self.bounds = bounds
        self.al = opts.al_options(problem.dims)
        self.inner = opts.inner_options()
        N = opts.n_hor
        dims = problem.dims
        u0 = np.zeros((N, dims.Nu)) if u_init is None else np.broadcast_to(
            np.asarray(u_init, dtype=float), (N, dims.Nu)).copy()
        if self.scaled:
            u0 = scale_to_internal(bounds, u0, "u")
        p0 = np.zeros(dims.Np) if p_init is None else np.asarray(p_init, dtype=float)
        self.point = DecisionPoint(np.clip(u0, self.bounds.u_min, self.bounds.u_max), p0, float(opts.T))
        self.mult = MultiplierState.initial(dims, N, self.al.mu0, self.al.c0)
        self.prev_residuals: Residuals | None = None
        self.workspace = Workspace()
        self.last_solution: SolverSolution | None = None
        self.stopped = False
        self.steps = 0

    @property
    def T(self) -> float:
        return self.point.T

    def set_setpoint(self, xdes=None, udes=None) -> None:
        """Swap the setpoint handed to the cost hooks; the warm start is kept."""
        self.base = self.base.with_setpoint(xdes, udes)
        self.problem = ScaledProblem(self.base, self.phys_bounds) if self.scaled else self.base

    def _to_internal_x(self, x):
        return scale_to_internal(self.phys_bounds, x, "x") if self.scaled else np.asarray(x, dtype=float)

    def _to_phys_u(self, u):
        return unscale_from_internal(self.phys_bounds, u, "u") if self.scaled else u

    def _to_phys_x(self, x):
        return unscale_from_internal(self.phys_bounds, x, "x") if self.scaled else x

    def step(self, x_k) -> StepInfo:
        """One sampling instant: warm start, solve, return the first control sample.

        On :class:`NumericalFailure` the controller state is left untouched and
        the error carries the last good control as ``held_control``.
        """
        start = time.perf_counter()
        opts = self.opts
        init = self.point
        mult = self.mult
        prev = self.prev_residuals
        if self.steps > 0:
            T_old = init.T
            T_new = max(T_old - opts.dt, opts.T_min) if self.shrinking else T_old
            if opts.shift_control or self.shrinking:
                dt = opts.dt
                init = DecisionPoint(shift_trajectory(init.u, T_old, T_new, dt), init.p.copy(), T_new)
                mult = shift_multipliers(mult, T_old, T_new, dt)
                prev = _shift_residuals(prev, T_new, dt) if prev is not None else None
            if self.shrinking and T_new <= opts.T_min:
                self.stopped = True
        try:
            sol = solve(self.problem, self._to_internal_x(x_k), self.bounds, init, self.al, self.inner,
                        mult=mult, prev_residuals=prev, workspace=self.workspace)
        except NumericalFailure as exc:
            held = self._to_phys_u(self.point.u[0]) if self.steps else None
            exc.held_control = held
            raise
        self.point = sol.point
        self.mult = sol.mult
        self.prev_residuals = sol.residuals
        self.last_solution = sol
        self.steps += 1
        if self.shrinking and sol.point.T <= opts.T_min:
            self.stopped = True
        u_applied = np.asarray(self._to_phys_u(sol.point.u[0]), dtype=float)
        return StepInfo(u_applied, sol, sol.point.T, self.stopped, time.perf_counter() - start,
                        self._to_phys_u(sol.point.u), self._to_phys_x(sol.x))


def mpc_step(controller: MpcController, x_k):
    info = controller.step(x_k)
    return info.u_applied, info


def shrinking_step(controller: MpcController, x_k):
    info = controller.step(x_k)
    return info.u_applied, info.T, info.stopped


# --- moving horizon estimation -------------------------------------------

class MheProblem(Problem):
    """Estimation problem over one window in shifted coordinates.

    The decision parameter ``p`` is the (scaled) state at the window start,
    the state is the deviation ``xt`` with ``xt(0) = 0``, and the physical
    state is ``sx * (xt + p) + ox``.  The running cost is the weighted
    squared output error.
    """

    def __init__(self, base: Problem, u_nodes, y_nodes, dt: float, weights, sx, ox, base_p=None):
        super().__init__()
        self.base = base
        self.name = f"{base.name}-mhe"
        nx = base.dims.Nx
        self.dims = ProblemDims(Nx=nx, Nu=0, Np=nx)
        self.u_nodes = np.asarray(u_nodes, dtype=float)
        self.y_nodes = np.asarray(y_nodes, dtype=float)
        self.dt = dt
        self.w = np.asarray(weights, dtype=float)
        self.sx, self.ox = np.asarray(sx, dtype=float), np.asarray(ox, dtype=float)
        self.base_p = np.zeros(base.dims.Np) if base_p is None else base_p
        if base.mass_matrix is not None:
            M = np.asarray(base.mass_matrix, dtype=float)
            self.mass_matrix = (M * self.sx[None, :]) / self.sx[:, None]

    def _interp(self, nodes, t):
        s = t / self.dt
        i = int(np.clip(np.floor(s), 0, len(nodes) - 2))
        th = s - i
        return (1 - th) * nodes[i] + th * nodes[i + 1]

    def _phys(self, x, p):
        return self.sx * (x + p) + self.ox

    def f(self, x, u, p, t):
        return self.base.f(self._phys(x, p), self._interp(self.u_nodes, t), self.base_p, t) / self.sx

    def dfdx_mult(self, x, u, p, t, vec):
        return self.sx * self.base.dfdx_mult(self._phys(x, p), self._interp(self.u_nodes, t), self.base_p, t,
                                             vec / self.sx)

    def dfdu_mult(self, x, u, p, t, vec):
        return np.zeros(0)

    def dfdp_mult(self, x, u, p, t, vec):
        return self.dfdx_mult(x, u, p, t, vec)

    def l(self, x, u, p, t):
        r = self.base.output(self._phys(x, p)) - self._interp(self.y_nodes, t)
        return float(np.sum(self.w * r * r))

    def dldx(self, x, u, p, t):
        xp = self._phys(x, p)
        r = self.base.output(xp) - self._interp(self.y_nodes, t)
        return self.sx * self.base.doutput_mult(xp, 2.0 * self.w * r)

    def dldp(self, x, u, p, t):
        return self.dldx(x, u, p, t)


class MovingHorizonEstimator:
    """Windowed least-squares state estimator.

    The base problem must provide ``output(x)`` and ``doutput_mult(x, vec)``.
    Feed it with :meth:`step` once per sample: the input applied over the
    previous interval and the new measurement.  Until ``n_window``
    measurements are buffered, the estimate is an open-loop prediction from
    ``x_init`` and :meth:`mhe_step` raises :class:`InsufficientData`.
    """

    def __init__(self, base: Problem, x_init, dt: float, n_window: int, opts: SolverOptions, weights=None,
                 x_scale=None, x_offset=None, p_bounds=None):
        if n_window < 2:
            raise ConfigError("MHE window needs at least two samples")
        if not hasattr(base, "output"):
            raise ConfigError(f"problem {base.name!r} has no output hook")
        self.base = base
        self.dt = dt
        self.n = n_window
        nx = base.dims.Nx
        self.sx = np.ones(nx) if x_scale is None else np.asarray(x_scale, dtype=float)
        self.ox = np.zeros(nx) if x_offset is None else np.asarray(x_offset, dtype=float)
        self.opts = replace(opts, n_hor=n_window, T=dt * (n_window - 1), optimize_p=True, optimize_T=False)
        self.opts.validate()
        dims = ProblemDims(Nx=nx, Nu=0, Np=nx)
        self.al = self.opts.al_options(dims)
        self.inner = self.opts.inner_options()
        ny = len(base.output(np.asarray(x_init, dtype=float)))
        self.weights = np.ones(ny) if weights is None else np.asarray(weights, dtype=float)
        if p_bounds is None:
            lo, hi = np.full(nx, -np.inf), np.full(nx, np.inf)
        else:
            lo = (np.asarray(p_bounds[0], dtype=float) - self.ox) / self.sx
            hi = (np.asarray(p_bounds[1], dtype=float) - self.ox) / self.sx
        self.bounds = Bounds(u_min=np.zeros(0), u_max=np.zeros(0), p_min=lo, p_max=hi,
                             T_min=self.opts.T, T_max=self.opts.T)
        self.u_buf: list[np.ndarray] = []
        self.y_buf: list[np.ndarray] = []
        self.pred_buf: list[np.ndarray] = []
        self.estimate = np.asarray(x_init, dtype=float).copy()
        self.p_next: np.ndarray | None = None
        self.workspace = Workspace()
        self.last_solution: SolverSolution | None = None

    @property
    def ready(self) -> bool:
        return len(self.y_buf) >= self.n

    def _predict(self, x, u):
        from scipy.integrate import solve_ivp

        sol = solve_ivp(lambda t, z: self.base.mass.solve(self.base.f(z, u, np.zeros(self.base.dims.Np), t)),
                        (0.0, self.dt), x, rtol=1e-8, atol=1e-8)
        return sol.y[:, -1]

    def push(self, u_prev, y):
        """Record the input applied since the last sample and the new measurement."""
        if self.y_buf:
            if u_prev is None:
                raise ConfigError("the input of the previous interval is required")
            u_prev = np.atleast_1d(np.asarray(u_prev, dtype=float))
            self.u_buf.append(u_prev)
            if not self.ready:
                self.estimate = self._predict(self.estimate, u_prev)
        self.y_buf.append(np.atleast_1d(np.asarray(y, dtype=float)))
        self.pred_buf.append(self.estimate.copy())
        # keep n measurements and n-1 inputs
        del self.y_buf[:-self.n]
        del self.pred_buf[:-self.n]
        del self.u_buf[:-(self.n - 1) or None]

    def solve_window(self) -> np.ndarray:
        if not self.ready:
            raise InsufficientData(f"{len(self.y_buf)} of {self.n} measurements buffered")
        u_nodes = np.array(self.u_buf + [self.u_buf[-1]])
        y_nodes = np.array(self.y_buf)
        prob = MheProblem(self.base, u_nodes, y_nodes, self.dt, self.weights, self.sx, self.ox)
        p0 = self.p_next if self.p_next is not None else (self.pred_buf[0] - self.ox) / self.sx
        p0 = np.clip(p0, self.bounds.p_min, self.bounds.p_max)
        init = DecisionPoint(np.zeros((self.n, 0)), p0, self.opts.T)
        sol = solve(prob, np.zeros(self.base.dims.Nx), self.bounds, init, self.al, self.inner,
                    workspace=self.workspace)
        self.last_solution = sol
        p = sol.point.p
        self.estimate = self.sx * (p + sol.x[-1]) + self.ox
        self.p_next = p + sol.x[1]
        return self.estimate.copy()

    def step(self, u_prev, y) -> np.ndarray:
        """Push a sample and return the current estimate (prediction while filling)."""
        self.push(u_prev, y)
        if self.ready:
            return self.solve_window()
        return self.estimate.copy()


def mhe_step(estimator: MovingHorizonEstimator, u_sample, y_sample) -> np.ndarray:
    estimator.push(u_sample, y_sample)
    return estimator.solve_window()
