"""Closed-loop simulation with an independent plant integrator, logs and metrics."""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from ..auglag import solve
from ..errors import InsufficientData, NumericalFailure
from ..gradient import DecisionPoint
from ..integrators import Grid
from ..mpc import MovingHorizonEstimator, MpcController
from ..options import SolverOptions
from ..problem import Bounds, Problem

PLANT_TOL = 1e-8


@dataclass
class Scenario:
    name: str
    kind: str  # "mpc" | "shrinking" | "ocp" | "mhe-mpc"
    make_problem: Callable[[], Problem]
    bounds: Callable[[Problem], Bounds]
    x0: np.ndarray
    options: SolverOptions
    duration: float = 0.0
    u_init: np.ndarray | None = None
    #: (switch time, xdes, udes) triples; applied when t reaches the switch time
    setpoints: list = field(default_factory=list)
    mhe: dict = field(default_factory=dict)
    description: str = ""

    def with_options(self, overrides: dict) -> "Scenario":
        return replace(self, options=self.options.updated(overrides))


@dataclass
class RunMetrics:
    scenario: str
    status: str = "ok"
    steps: int = 0
    J_int: float = 0.0
    max_violation: float = 0.0
    terminal_error: float = 0.0
    step_time_mean: float = 0.0
    step_time_max: float = 0.0
    constraints_active: bool = False
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True, default=_json_default)


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(type(obj))


@dataclass
class TrajectoryLog:
    columns: list[str]
    rows: list[list[float]] = field(default_factory=list)
    header_note: str = ""
    step_times: list[float] = field(default_factory=list)

    def append(self, row) -> None:
        self.rows.append([float(v) for v in row])

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows])

    def to_csv(self) -> str:
        buf = io.StringIO()
        if self.header_note:
            buf.write(f"# {self.header_note}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([repr(v) for v in r])
        return buf.getvalue()


def read_csv(text: str) -> tuple[list[str], np.ndarray]:
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    reader = csv.reader(lines)
    cols = next(reader)
    data = np.array([[float(v) for v in row] for row in reader], dtype=float)
    return cols, data.reshape(-1, len(cols))


@dataclass
class RunResult:
    metrics: RunMetrics
    log: TrajectoryLog
    error: Exception | None = None


# --- plant and bookkeeping -------------------------------------------------

def plant_step(problem: Problem, x, u, dt: float, t0: float = 0.0) -> np.ndarray:
    """Integrate the true system over one sample with zero-order-hold input."""
    p = np.zeros(problem.dims.Np)
    mass = problem.mass

    def rhs(t, z):
        return mass.solve(problem.f(z, u, p, t))

    sol = solve_ivp(rhs, (t0, t0 + dt), np.asarray(x, dtype=float), method="RK45", rtol=PLANT_TOL,
                    atol=PLANT_TOL)
    if not sol.success or not np.all(np.isfinite(sol.y[:, -1])):
        raise NumericalFailure(f"plant integration failed: {sol.message}")
    return sol.y[:, -1]


def _violation(problem: Problem, x, u) -> float:
    d = problem.dims
    p = np.zeros(d.Np)
    v = 0.0
    if d.Nh:
        v = max(v, float(np.max(problem.h(x, u, p, 0.0))))
    if d.Ng:
        v = max(v, float(np.max(np.abs(problem.g(x, u, p, 0.0)))))
    return max(v, 0.0)


def _active(problem: Problem, bounds: Bounds, x, u, tol: float) -> bool:
    d = problem.dims
    p = np.zeros(d.Np)
    if d.Nh and np.any(problem.h(x, u, p, 0.0) >= -tol):
        return True
    span = np.maximum(np.abs(bounds.u_max - bounds.u_min), 1e-12)
    near = (u - bounds.u_min <= tol * span) | (bounds.u_max - u <= tol * span)
    return bool(np.any(near[np.isfinite(span)]))


def _integrated_cost(problem: Problem, ts, xs, us) -> float:
    if len(ts) < 2:
        return 0.0
    p = np.zeros(problem.dims.Np)
    lv = np.array([problem.l(x, u, p, t) for t, x, u in zip(ts, xs, us)], dtype=float)
    return float(np.trapezoid(lv, ts) + problem.V(xs[-1], p, 0.0))


def _finish_metrics(m: RunMetrics, log: TrajectoryLog, problem, ts, xs, us, xdes):
    m.steps = len(log.rows)
    m.J_int = _integrated_cost(problem, ts, xs, us)
    if xs:
        m.terminal_error = float(np.max(np.abs(np.asarray(xs[-1]) - xdes)))
    if log.step_times:
        m.step_time_mean = float(np.mean(log.step_times))
        m.step_time_max = float(np.max(log.step_times))
    if not m.constraints_active:
        m.extra["constraint_note"] = "constraints never active"


def _finish_plan(problem, log, ts, xs, us, x, info, t, dt, viol_fn):
    """Apply the remaining plan (length ``info.T``) open loop, sampled with ``dt``."""
    u_traj = np.asarray(info.u_traj, dtype=float)
    grid_t = np.linspace(0.0, info.T, u_traj.shape[0])
    n = int(round(info.T / dt))
    for j in range(n):
        tau = j * dt
        u = np.array([np.interp(tau, grid_t, u_traj[:, i]) for i in range(u_traj.shape[1])])
        if j:
            log.append([t + tau, *x, *u, viol_fn(problem, x, u), info.T - tau])
            ts.append(t + tau)
            xs.append(x.copy())
            us.append(u)
        x = plant_step(problem, x, u, dt, t + tau)
    log.append([t + n * dt, *x, *u_traj[-1], viol_fn(problem, x, u_traj[-1]), 0.0])
    ts.append(t + n * dt)
    xs.append(x.copy())
    us.append(u_traj[-1].copy())
    return x


# --- scenario runners --------------------------------------------------------

def run_closed_loop(scenario: Scenario, seed: int = 0) -> RunResult:
    """Simulate ``scenario``; never raises on solver failure (status carries it)."""
    if scenario.kind == "ocp":
        return run_ocp(scenario, seed)
    problem = scenario.make_problem()
    bounds = scenario.bounds(problem)
    opts = scenario.options
    nx, nu = problem.dims.Nx, problem.dims.Nu
    cols = ["t"] + [f"x{i}" for i in range(nx)] + [f"u{i}" for i in range(nu)]
    mhe_mode = scenario.kind == "mhe-mpc"
    if mhe_mode:
        cols += [f"xhat{i}" for i in range(nx)]
    cols += ["max_violation", "T"]
    log = TrajectoryLog(cols, header_note=f"scenario={scenario.name} seed={seed}")
    metrics = RunMetrics(scenario.name, seed=seed)
    rng = np.random.default_rng(seed)

    shrinking = scenario.kind == "shrinking"
    ctrl = MpcController(problem, bounds, opts, shrinking=shrinking, u_init=scenario.u_init)
    est = None
    if mhe_mode:
        cfg = scenario.mhe
        est_opts = opts.updated(cfg.get("overrides", {}))
        est = MovingHorizonEstimator(problem, scenario.x0 + np.asarray(cfg["initial_offset"], dtype=float),
                                     opts.dt, cfg["n_window"], est_opts, weights=cfg.get("weights"),
                                     x_scale=cfg.get("x_scale"), x_offset=cfg.get("x_offset"))
        noise_std = np.asarray(cfg["noise_std"], dtype=float)

    dt = opts.dt
    n_steps = int(round(scenario.duration / dt))
    x = np.asarray(scenario.x0, dtype=float).copy()
    ts, xs, us = [], [], []
    u_prev = None
    xdes = getattr(problem, "xdes", np.zeros(nx))
    schedule = sorted(scenario.setpoints, key=lambda s: s[0])
    error = None
    for k in range(n_steps):
        t = k * dt
        while schedule and schedule[0][0] <= t + 1e-12:
            _, xd, ud = schedule.pop(0)
            ctrl.set_setpoint(xd, ud)
            xdes = np.asarray(xd, dtype=float)
        x_ctrl = x
        start = time.perf_counter()
        try:
            if est is not None:
                y = problem.output(x) + noise_std * rng.standard_normal(len(noise_std))
                x_ctrl = est.step(u_prev, y)
            info = ctrl.step(x_ctrl)
        except NumericalFailure as exc:
            metrics.status = "numerical_failure"
            metrics.extra["error"] = str(exc)
            error = exc
            break
        log.step_times.append(time.perf_counter() - start)
        u = info.u_applied
        viol = _violation(problem, x, u)
        metrics.max_violation = max(metrics.max_violation, viol)
        metrics.constraints_active |= _active(problem, bounds, x, u, 1e-3)
        row = [t, *x, *u]
        if mhe_mode:
            row += list(x_ctrl)
        row += [viol, info.T]
        log.append(row)
        ts.append(t)
        xs.append(x.copy())
        us.append(np.asarray(u, dtype=float).copy())
        if shrinking and info.stopped:
            metrics.extra["stopped_at"] = t
            metrics.extra["error_at_stop_rule"] = float(np.max(np.abs(x - xdes)))
            try:
                x = _finish_plan(problem, log, ts, xs, us, x, info, t, dt, viol_fn=_violation)
            except NumericalFailure as exc:
                metrics.status = "numerical_failure"
                metrics.extra["error"] = str(exc)
                error = exc
            break
        try:
            x = plant_step(problem, x, u, dt, t)
        except NumericalFailure as exc:
            metrics.status = "numerical_failure"
            metrics.extra["error"] = str(exc)
            error = exc
            break
        u_prev = u
    _finish_metrics(metrics, log, problem, ts, xs, us, xdes)
    if shrinking:
        metrics.extra["stopped"] = bool(ctrl.stopped)
    return RunResult(metrics, log, error)


def run_ocp(scenario: Scenario, seed: int = 0) -> RunResult:
    """One-shot optimal control solve; the log is the optimal trajectory."""
    problem = scenario.make_problem()
    bounds = scenario.bounds(problem)
    opts = scenario.options
    opts.validate(problem.dims)
    N = opts.n_hor
    u0 = np.zeros((N, problem.dims.Nu)) if scenario.u_init is None else np.broadcast_to(
        scenario.u_init, (N, problem.dims.Nu)).copy()
    init = DecisionPoint(u0, np.zeros(problem.dims.Np), opts.T)
    metrics = RunMetrics(scenario.name, seed=seed)
    nx, nu = problem.dims.Nx, problem.dims.Nu
    cols = ["t"] + [f"x{i}" for i in range(nx)] + [f"u{i}" for i in range(nu)] + ["max_violation", "T"]
    log = TrajectoryLog(cols, header_note=f"scenario={scenario.name} seed={seed}")
    start = time.perf_counter()
    try:
        sol = solve(problem, scenario.x0, bounds, init, opts.al_options(problem.dims), opts.inner_options())
    except NumericalFailure as exc:
        metrics.status = "numerical_failure"
        metrics.extra["error"] = str(exc)
        return RunResult(metrics, log, exc)
    log.step_times.append(time.perf_counter() - start)
    grid = Grid(N, sol.point.T)
    t = grid.t
    for k in range(N):
        viol = _violation(problem, sol.x[k], sol.point.u[k])
        log.append([t[k], *sol.x[k], *sol.point.u[k], viol, sol.point.T])
    res = sol.residuals
    metrics.status = sol.status_label
    metrics.max_violation = float(max(log.column("max_violation")))
    metrics.constraints_active = True
    metrics.extra.update(
        converged=sol.converged,
        reason=sol.status.reason,
        outer_iterations=sol.outer_iterations,
        inner_iterations=sol.inner_iterations,
        path_equality_residual=float(np.max(np.abs(res.g))) if res.g.size else 0.0,
        terminal_equality_residual=float(np.max(np.abs(res.gT))) if res.gT.size else 0.0,
        cost=sol.cost,
    )
    _finish_metrics(metrics, log, problem, list(t), list(sol.x), list(sol.point.u),
                    getattr(problem, "xf", sol.x[-1]))
    metrics.J_int = sol.cost
    return RunResult(metrics, log)
