"""Scenario catalog: problem + bounds + options + simulation settings."""

from __future__ import annotations

import numpy as np

from ..auglag import estimate_penalty_min
from ..gradient import DecisionPoint
from ..options import SolverOptions
from ..problem import Bounds
from .harness import Scenario
from .problems import BallOnPlate, Crane2D, Cstr, DoubleIntegratorShrinking, DualArmRobot, load_cstr_data


def ball_on_plate() -> Scenario:
    opts = SolverOptions(n_hor=20, T=0.3, dt=0.01, j_max=2, i_max=3, integrator="heun", eps_rel_u=1.0)
    return Scenario(
        name="ball-on-plate", kind="mpc", make_problem=BallOnPlate,
        bounds=lambda pb: Bounds.for_dims(pb.dims, umax=0.0524),
        x0=np.array([0.1, 0.01]), options=opts, duration=4.0, u_init=np.zeros(1),
        description="linear ball-on-plate axis with state box constraints",
    )


def _crane_bounds(pb):
    return Bounds.for_dims(pb.dims, umax=2.0)


def _penalty_floor(problem, bounds, x0, opts) -> float:
    init = DecisionPoint(np.zeros((opts.n_hor, problem.dims.Nu)), np.zeros(problem.dims.Np), opts.T)
    return float(np.round(estimate_penalty_min(problem, x0, bounds, init), 3))


def crane2d() -> Scenario:
    opts = SolverOptions(n_hor=20, T=2.0, dt=0.002, j_max=2, i_max=1, integrator="heun", eps_rel_u=1.0)
    x0 = np.array([-2.0, 0.0, 2.0, 0.0, 0.0, 0.0])
    pb = Crane2D()
    c_min = _penalty_floor(pb, _crane_bounds(pb), x0, opts)
    opts = opts.updated({"PenaltyMin": c_min, "PenaltyInit": c_min})
    return Scenario(
        name="crane2d", kind="mpc", make_problem=Crane2D, bounds=_crane_bounds,
        x0=x0, options=opts, duration=12.0, u_init=np.zeros(2),
        description="overhead crane lifting a load over an obstacle",
    )


def double_integrator_shrinking() -> Scenario:
    opts = SolverOptions(n_hor=30, T=6.0, dt=0.001, j_max=2, i_max=1, integrator="heun", optimize_T=True,
                         T_min=0.1, T_max=10.0, constraints_abs_tol=1e-3, eps_rel_u=1.0, c0=100.0)
    return Scenario(
        name="double-integrator-shrinking", kind="shrinking", make_problem=DoubleIntegratorShrinking,
        bounds=lambda pb: Bounds.for_dims(pb.dims, umax=1.0, T_min=0.1, T_max=10.0),
        x0=np.array([-1.0, -1.0]), options=opts, duration=10.0, u_init=np.zeros(1),
        description="finite-time transfer with free, shrinking horizon",
    )


def dual_arm_robot() -> Scenario:
    opts = SolverOptions(n_hor=31, T=10.0, dt=10.0, j_max=200, i_max=2000, integrator="heun",
                         eps_rel_c=1e-5, constraints_abs_tol=1e-3, line_search="adaptive")
    return Scenario(
        name="dual-arm-robot", kind="ocp", make_problem=DualArmRobot,
        bounds=lambda pb: Bounds.for_dims(pb.dims, umax=1.0),
        x0=DualArmRobot().x0, options=opts,
        description="point-to-point motion of a closed-chain dual-arm robot (one-shot OCP)",
    )


def cstr_mhe() -> Scenario:
    data = load_cstr_data()
    pb = Cstr(data)
    sp = [np.asarray(s["u"], dtype=float) for s in data["setpoints"]]
    xs = [pb.steady_state(u) for u in sp]
    opts = SolverOptions(n_hor=40, T=1200.0, dt=1.0, j_max=3, i_max=1, integrator="heun",
                         x_scale=[1000.0, 1000.0, 10.0, 10.0], x_offset=[0.0, 0.0, 100.0, 100.0],
                         u_scale=[10.0, 1000.0], u_offset=[15.0, -2000.0])
    period = 300.0
    schedule = [(k * period, xs[k % 2], sp[k % 2]) for k in range(4)]
    return Scenario(
        name="cstr-mhe", kind="mhe-mpc", make_problem=lambda: Cstr(data),
        bounds=lambda pb: Bounds(u_min=data["bounds"]["u_min"], u_max=data["bounds"]["u_max"]),
        x0=xs[0].copy(), options=opts, duration=4 * period, u_init=sp[0], setpoints=schedule,
        mhe={
            "n_window": 11,
            # one small, capped gradient step per sample: the warm-started estimate acts as a low-pass filter
            "overrides": {"MaxGradIter": 1, "MaxMultIter": 1, "LineSearchInit": 3e-6, "LineSearchMax": 3e-6,
                          "LineSearchFallback": 3e-6},
            "noise_std": [4.0, 4.0],
            "initial_offset": [100.0, 100.0, 5.0, -7.0],
            "x_scale": [1000.0, 1000.0, 10.0, 10.0],
            "x_offset": [0.0, 0.0, 100.0, 100.0],
        },
        description="CSTR under MPC with a moving horizon estimator in the loop",
    )


SCENARIOS = {
    "ball-on-plate": ball_on_plate,
    "crane2d": crane2d,
    "double-integrator-shrinking": double_integrator_shrinking,
    "cstr-mhe": cstr_mhe,
    "dual-arm-robot": dual_arm_robot,
}


def get_scenario(name: str) -> Scenario:
    try:
        return SCENARIOS[name]()
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; known: {sorted(SCENARIOS)}") from None
