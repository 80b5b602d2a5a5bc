"""Projected gradient iterations over (u, p, T) at fixed multipliers."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .augmented import Augmented, MultiplierState
from .errors import NumericalFailure
from .integrators import HEUN, Grid, IntegratorChoice, integrate_adjoint, integrate_forward, quadrature
from .problem import Bounds, Problem

STRATEGIES = ("adaptive", "explicit_v1", "explicit_v2")


@dataclass
class DecisionPoint:
    u: np.ndarray  # (N_hor, Nu)
    p: np.ndarray  # (Np,)
    T: float

    def copy(self) -> "DecisionPoint":
        return DecisionPoint(self.u.copy(), self.p.copy(), float(self.T))


@dataclass
class GradientBundle:
    d_u: np.ndarray
    d_p: np.ndarray | None = None
    d_T: float | None = None


@dataclass
class LineSearchConfig:
    strategy: str = "adaptive"
    alpha_init: float = 1e-3
    interval_factor: float = 0.85
    adapt_factor: float = 2.0
    interval_tol: float = 0.1
    alpha_min: float = 1e-10
    alpha_max: float = 1e2
    alpha0: float = 1e-4
    gamma_p: float = 1.0
    gamma_T: float = 1.0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown line search {self.strategy!r}; choose from {STRATEGIES}")
        if not 0 < self.interval_factor < 1:
            raise ValueError("interval_factor must lie in (0, 1)")
        if not self.alpha_min <= self.alpha0 <= self.alpha_max:
            raise ValueError("need alpha_min <= alpha0 <= alpha_max")
        if self.gamma_p <= 0 or self.gamma_T <= 0:
            raise ValueError("step scaling factors must be positive")

    def initial_interval(self) -> tuple[float, float]:
        a = self.alpha_init
        return a * (1 - self.interval_factor), a * (1 + self.interval_factor)


@dataclass
class InnerOptions:
    j_max: int = 2
    eps_rel_c: float = 1e-6
    line_search: LineSearchConfig = field(default_factory=LineSearchConfig)
    integrator: IntegratorChoice = HEUN
    optimize_p: bool = False
    optimize_T: bool = False


@dataclass
class Workspace:
    """Caller-owned state that survives between inner solves.

    Holds the adaptive line-search interval and the last iterate/gradient
    pair used by the explicit step formulas.
    """

    interval: tuple[float, float] | None = None
    prev_point: DecisionPoint | None = None
    prev_grads: GradientBundle | None = None


@dataclass
class InnerResult:
    point: DecisionPoint
    x: np.ndarray
    eta: float
    iterations: int
    cost_history: list[float]
    grads: GradientBundle | None = None


# --- elementary pieces -----------------------------------------------------

def eval_hamiltonian(problem: Problem, x, u, p, lam, t, mult_at_t, aug: Augmented | None = None) -> float:
    """``lbar + lam^T f`` at one time instant; ``mult_at_t = (mu_g, c_g, mu_h, c_h)``."""
    aug = aug or Augmented(problem)
    val = aug.hamiltonian(x, u, p, t, lam, mult_at_t)
    if not np.isfinite(val):
        raise NumericalFailure("non-finite Hamiltonian")
    return val


def augmented_cost(problem, grid: Grid, x, u, p, mult: MultiplierState, aug: Augmented | None = None) -> float:
    """``Jbar = Vbar(x(T)) + int lbar dt`` (trapezoidal)."""
    aug = aug or Augmented(problem)
    t = grid.t
    lvals = aug.lbar_nodes(x, u, p, t, mult)
    return float(aug.Vbar(x[-1], p, grid.T, mult) + quadrature(grid, lvals))


def compute_gradients(problem, grid: Grid, x, lam, u, p, mult: MultiplierState, optimize_p=False,
                      optimize_T=False, aug: Augmented | None = None, static_u=None) -> GradientBundle:
    """``d_u = H_u`` nodewise, ``d_p = Vbar_p + int H_p``, ``d_T = Vbar_T + H(T)``."""
    aug = aug or Augmented(problem)
    t = grid.t
    N = grid.N
    d_u = np.empty((N, problem.dims.Nu))
    if static_u is None:
        for k in range(N):
            d_u[k] = aug.H_u(x[k], u[k], p, t[k], lam[k], mult.node(k))
    else:
        for k in range(N):
            d_u[k] = static_u[k] + problem.dfdu_mult(x[k], u[k], p, t[k], lam[k])
    d_p = d_T = None
    if optimize_p and problem.dims.Np:
        Hp = np.array([aug.H_p(x[k], u[k], p, t[k], lam[k], mult.node(k)) for k in range(N)])
        d_p = aug.Vbar_p(x[-1], p, grid.T, mult) + quadrature(grid, Hp)
    if optimize_T:
        d_T = aug.Vbar_T(x[-1], p, grid.T, mult) + aug.hamiltonian(
            x[-1], u[-1], p, grid.T, lam[-1], mult.node(N - 1))
    bundle = GradientBundle(d_u, d_p, d_T)
    if not np.all(np.isfinite(d_u)) or (d_p is not None and not np.all(np.isfinite(d_p))) or (
            d_T is not None and not np.isfinite(d_T)):
        raise NumericalFailure("non-finite gradient")
    return bundle


def project(point: DecisionPoint, bounds: Bounds) -> DecisionPoint:
    """Clamp u (every node), p and T onto their boxes."""
    u = np.clip(point.u, bounds.u_min, bounds.u_max)
    p = np.clip(point.p, bounds.p_min, bounds.p_max) if point.p.size else point.p.copy()
    T = float(min(max(point.T, bounds.T_min), bounds.T_max))
    return DecisionPoint(u, p, T)


def regrid(traj, T_old: float, T_new: float) -> np.ndarray:
    """Resample node values of a trajectory onto the uniform grid of ``T_new``.

    Values are linear in absolute time; beyond the old horizon the last node
    value is held.
    """
    traj = np.asarray(traj, dtype=float)
    if T_new == T_old or traj.shape[1] == 0:
        return traj.copy()
    N = traj.shape[0]
    t_old = np.linspace(0.0, T_old, N)
    t_new = np.linspace(0.0, T_new, N)
    return np.column_stack([np.interp(t_new, t_old, traj[:, i]) for i in range(traj.shape[1])])


def _l2_sq(grid: Grid, traj) -> float:
    return float(quadrature(grid, np.sum(np.asarray(traj) ** 2, axis=1))) if traj.shape[1] else 0.0


def _l2_inner(grid: Grid, a, b) -> float:
    return float(quadrature(grid, np.sum(a * b, axis=1))) if a.shape[1] else 0.0


def _rel(num: float, den: float) -> float:
    if den == 0.0:
        return 0.0 if num == 0.0 else np.inf
    return num / den


def relative_change(prev: DecisionPoint, curr: DecisionPoint, optimize_p=False, optimize_T=False) -> float:
    """Largest relative change of u (L2 on the grid), p and T.

    Trajectories are compared node by node, also when the horizon changed.
    """
    terms = []
    if curr.u.shape[1]:
        grid = Grid(curr.u.shape[0], curr.T if curr.T > 0 else 1.0)
        du = curr.u - prev.u
        terms.append(_rel(np.sqrt(_l2_sq(grid, du)), np.sqrt(_l2_sq(grid, curr.u))))
    if optimize_p and curr.p.size:
        terms.append(_rel(np.linalg.norm(curr.p - prev.p), np.linalg.norm(curr.p)))
    if optimize_T:
        terms.append(_rel(abs(curr.T - prev.T), abs(curr.T)))
    return float(max(terms)) if terms else 0.0


# --- line searches ------------------------------------------------------------

def parabola_step(alphas, costs, lo: float, hi: float) -> float:
    """Minimizer over ``[lo, hi]`` of the quadratic through three samples.

    A non-convex or degenerate fit returns the best sampled step.
    """
    a1, a2, a3 = alphas
    J1, J2, J3 = costs
    # divided differences; p2 is the curvature coefficient
    d12 = (J2 - J1) / (a2 - a1)
    d23 = (J3 - J2) / (a3 - a2)
    p2 = (d23 - d12) / (a3 - a1)
    if not np.isfinite(p2) or p2 <= 0.0:
        return float(alphas[int(np.nanargmin(costs))]) if np.any(np.isfinite(costs)) else float(lo)
    p1 = d12 - p2 * (a1 + a2)
    return float(min(max(-p1 / (2.0 * p2), lo), hi))


def line_search_adaptive(cost_eval, interval: tuple[float, float], cfg: LineSearchConfig):
    """Quadratic-fit step on ``interval``; returns ``(alpha, next_interval)``.

    ``cost_eval(alpha)`` evaluates the augmented cost at the projected trial
    point.  If the step lands near an interval border the interval is scaled
    by ``cfg.adapt_factor`` for the next call.
    """
    lo, hi = interval
    mid = 0.5 * (lo + hi)
    alphas = (lo, mid, hi)
    costs = np.array([cost_eval(a) for a in alphas], dtype=float)
    alpha = parabola_step(alphas, costs, lo, hi)
    width = hi - lo
    if alpha >= hi - cfg.interval_tol * width and hi * cfg.adapt_factor <= cfg.alpha_max:
        nxt = (lo * cfg.adapt_factor, hi * cfg.adapt_factor)
    elif alpha <= lo + cfg.interval_tol * width and lo / cfg.adapt_factor >= cfg.alpha_min:
        nxt = (lo / cfg.adapt_factor, hi / cfg.adapt_factor)
    else:
        nxt = (lo, hi)
    return alpha, nxt


def _explicit_terms(grid, prev, prev_g, curr, curr_g, optimize_p, optimize_T):
    du = curr.u - prev.u
    ddu = curr_g.d_u - prev_g.d_u
    s_uu, s_ud, s_dd = _l2_sq(grid, du), _l2_inner(grid, du, ddu), _l2_sq(grid, ddu)
    p_terms = (0.0, 0.0, 0.0)
    if optimize_p and curr_g.d_p is not None and prev_g.d_p is not None:
        dp = curr.p - prev.p
        ddp = curr_g.d_p - prev_g.d_p
        p_terms = (float(dp @ dp), float(dp @ ddp), float(ddp @ ddp))
    T_terms = (0.0, 0.0, 0.0)
    if optimize_T and curr_g.d_T is not None and prev_g.d_T is not None:
        dT = curr.T - prev.T
        ddT = curr_g.d_T - prev_g.d_T
        T_terms = (dT * dT, dT * ddT, ddT * ddT)
    return (s_uu, s_ud, s_dd), p_terms, T_terms


def explicit_step_v1(u_terms, p_terms, T_terms, gamma_p=1.0, gamma_T=1.0) -> float:
    """``<du,dd> + gp<dp,ddp> + gT dT ddT`` over ``<dd,dd> + gp^2 <ddp,ddp> + gT^2 ddT^2``."""
    num = u_terms[1] + gamma_p * p_terms[1] + gamma_T * T_terms[1]
    den = u_terms[2] + gamma_p ** 2 * p_terms[2] + gamma_T ** 2 * T_terms[2]
    return num / den if den != 0 else np.nan


def explicit_step_v2(u_terms, p_terms, T_terms, gamma_p=1.0, gamma_T=1.0) -> float:
    """``<du,du> + gp<dp,dp> + gT dT^2`` over ``<du,dd> + gp^2 <dp,ddp> + gT^2 dT ddT``."""
    num = u_terms[0] + gamma_p * p_terms[0] + gamma_T * T_terms[0]
    den = u_terms[1] + gamma_p ** 2 * p_terms[1] + gamma_T ** 2 * T_terms[1]
    return num / den if den != 0 else np.nan


def line_search_explicit(prev: DecisionPoint, prev_g: GradientBundle, curr: DecisionPoint,
                         curr_g: GradientBundle, cfg: LineSearchConfig, optimize_p=False,
                         optimize_T=False) -> float:
    """Barzilai-Borwein type step from the last two iterates, safeguarded."""
    grid = Grid(curr.u.shape[0], curr.T)
    terms = _explicit_terms(grid, prev, prev_g, curr, curr_g, optimize_p, optimize_T)
    if cfg.strategy == "explicit_v2":
        alpha = explicit_step_v2(*terms, cfg.gamma_p, cfg.gamma_T)
    else:
        alpha = explicit_step_v1(*terms, cfg.gamma_p, cfg.gamma_T)
    if not np.isfinite(alpha) or alpha <= 0:
        return cfg.alpha0
    return float(min(max(alpha, cfg.alpha_min), cfg.alpha_max))


# --- inner loop -----------------------------------------------------------

def _step(point: DecisionPoint, grads: GradientBundle, alpha: float, cfg: LineSearchConfig,
          bounds: Bounds) -> DecisionPoint:
    u = point.u - alpha * grads.d_u
    p = point.p - cfg.gamma_p * alpha * grads.d_p if grads.d_p is not None else point.p.copy()
    T = point.T - cfg.gamma_T * alpha * grads.d_T if grads.d_T is not None else point.T
    new = project(DecisionPoint(u, p, T), bounds)
    if new.T != point.T:
        new.u = regrid(new.u, point.T, new.T)
    return new


def solve_inner(problem: Problem, x0, bounds: Bounds, mult: MultiplierState, init: DecisionPoint,
                opts: InnerOptions, workspace: Workspace | None = None, x_init=None) -> InnerResult:
    """Projected gradient method for the inner minimization.

    Each iteration runs adjoint, gradients, line search, projected update and
    forward integration; it stops once the relative change ``eta`` drops to
    ``opts.eps_rel_c`` or after ``opts.j_max`` iterations.
    """
    if opts.j_max < 1:
        raise ValueError("j_max must be at least 1")
    ws = workspace if workspace is not None else Workspace()
    cfg = opts.line_search
    if ws.interval is None:
        ws.interval = cfg.initial_interval()
    aug = Augmented(problem)
    N = init.u.shape[0]
    integ = opts.integrator
    opt_p = opts.optimize_p and problem.dims.Np > 0
    opt_T = opts.optimize_T

    point = init.copy()
    grid = Grid(N, point.T)
    x = integrate_forward(problem, grid, point.u, point.p, x0, integ) if x_init is None else x_init
    history = [augmented_cost(problem, grid, x, point.u, point.p, mult, aug)]
    eta = np.inf
    grads = None
    j = 0
    for j in range(1, opts.j_max + 1):
        try:
            Sx, Su = aug.static_parts(x, point.u, point.p, grid.t, mult)
            lam = integrate_adjoint(problem, grid, x, point.u, point.p, mult, integ, aug, Sx)
            grads = compute_gradients(problem, grid, x, lam, point.u, point.p, mult, opt_p, opt_T, aug, Su)

            if cfg.strategy == "adaptive":
                def trial_cost(alpha):
                    trial = _step(point, grads, alpha, cfg, bounds)
                    tgrid = Grid(N, trial.T)
                    try:
                        xt = integrate_forward(problem, tgrid, trial.u, trial.p, x0, integ)
                    except NumericalFailure:
                        return np.inf
                    return augmented_cost(problem, tgrid, xt, trial.u, trial.p, mult, aug)

                alpha, ws.interval = line_search_adaptive(trial_cost, ws.interval, cfg)
            elif ws.prev_point is not None and ws.prev_point.u.shape == point.u.shape:
                alpha = line_search_explicit(ws.prev_point, ws.prev_grads, point, grads, cfg, opt_p, opt_T)
            else:
                alpha = cfg.alpha0

            new = _step(point, grads, alpha, cfg, bounds)
            grid = Grid(N, new.T)
            x = integrate_forward(problem, grid, new.u, new.p, x0, integ)
        except NumericalFailure as exc:
            exc.iteration = j
            raise
        eta = relative_change(point, new, opt_p, opt_T)
        ws.prev_point, ws.prev_grads = point, grads
        point = new
        history.append(augmented_cost(problem, grid, x, point.u, point.p, mult, aug))
        if eta <= opts.eps_rel_c:
            break
    return InnerResult(point, x, float(eta), j, history, grads)
