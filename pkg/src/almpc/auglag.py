"""Augmented Lagrangian outer loop: multiplier/penalty updates and convergence."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .augmented import Augmented, MultiplierState, transform_inequality
from .gradient import DecisionPoint, InnerOptions, Workspace, augmented_cost, regrid, solve_inner
from .integrators import Grid, integrate_forward, quadrature
from .problem import Bounds, Problem

__all__ = [
    "ALOptions", "Residuals", "ConvergenceStatus", "OuterDiagnostics", "SolverSolution",
    "transform_inequality", "augmented_integral_cost", "augmented_terminal_cost",
    "update_multiplier_eq", "update_multiplier_ineq", "update_penalty_eq", "update_penalty_ineq",
    "compute_residuals", "check_convergence", "solve", "estimate_penalty_min", "optimal_slack",
]


@dataclass
class ALOptions:
    i_max: int = 1
    eps_g: float | np.ndarray = 1e-4
    eps_h: float | np.ndarray = 1e-4
    eps_gT: float | np.ndarray = 1e-4
    eps_hT: float | np.ndarray = 1e-4
    eps_rel_c: float = 1e-6
    eps_rel_u: float | None = None  # None: 10 * eps_rel_c
    rho: float = 0.0
    beta_in: float = 2.0
    beta_de: float = 0.5
    gamma_in: float = 0.9
    gamma_de: float = 0.2
    mu_max: float = 1e6
    c_min: float = 1e-4
    c_max: float = 1e6
    mu0: float = 0.0
    c0: float = 1.0

    def __post_init__(self):
        if self.eps_rel_u is None:
            self.eps_rel_u = 10.0 * self.eps_rel_c
        if self.i_max < 1:
            raise ValueError("i_max must be at least 1")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")
        if self.beta_in < 1.0 or self.beta_de > 1.0 or self.beta_de <= 0:
            raise ValueError("need beta_in >= 1 and 0 < beta_de <= 1")
        if self.gamma_in <= 0 or not 0 < self.gamma_de < 1:
            raise ValueError("need gamma_in > 0 and 0 < gamma_de < 1")
        if not 0 < self.c_min <= self.c_max:
            raise ValueError("need 0 < c_min <= c_max")
        if self.eps_rel_u < self.eps_rel_c:
            raise ValueError("eps_rel_u must not be smaller than eps_rel_c")
        if self.mu_max <= 0:
            raise ValueError("mu_max must be positive")


# --- augmented costs (thin wrappers for direct use) ------------------------

def augmented_integral_cost(problem: Problem, x, u, p, t, mult_at_t) -> float:
    return Augmented(problem).lbar(x, u, p, t, mult_at_t)


def augmented_terminal_cost(problem: Problem, x_T, p, T, mult: MultiplierState) -> float:
    return Augmented(problem).Vbar(x_T, p, T, mult)


def optimal_slack(h, mu, c):
    """Minimizer over ``v >= 0`` of ``mu (h + v) + c/2 (h + v)^2``."""
    return np.maximum(0.0, -np.asarray(mu) / np.asarray(c) - np.asarray(h))


# --- update rules ----------------------------------------------------------

def update_multiplier_eq(mu, c, g, eps_g, eta, rho, eps_rel_u, mu_max):
    mu, c, g = np.asarray(mu, float), np.asarray(c, float), np.asarray(g, float)
    active = (np.abs(g) > eps_g) & (eta <= eps_rel_u)
    out = np.where(active, mu + (1.0 - rho) * c * g, mu)
    return np.clip(out, -mu_max, mu_max)


def update_multiplier_ineq(mu, c, hbar, eps_h, eta, rho, eps_rel_u, mu_max):
    mu, c, hbar = np.asarray(mu, float), np.asarray(c, float), np.asarray(hbar, float)
    active = ((hbar > eps_h) & (eta <= eps_rel_u)) | (hbar < 0)
    out = np.where(active, mu + (1.0 - rho) * c * hbar, mu)
    return np.clip(out, 0.0, mu_max)


def _penalty_rule(c, r_now, r_prev, eps, eta, beta_in, beta_de, gamma_in, gamma_de, eps_rel_u, c_min, c_max):
    grow = (r_now >= np.maximum(gamma_in * r_prev, eps)) & (eta <= eps_rel_u)
    shrink = r_now <= gamma_de * eps
    out = np.where(grow, beta_in * c, np.where(shrink, beta_de * c, c))
    return np.clip(out, c_min, c_max)


def update_penalty_eq(c, g_now, g_prev, eps_g, eta, beta_in, beta_de, gamma_in, gamma_de, eps_rel_u,
                      c_min, c_max):
    return _penalty_rule(np.asarray(c, float), np.abs(np.asarray(g_now, float)),
                         np.abs(np.asarray(g_prev, float)), eps_g, eta, beta_in, beta_de, gamma_in,
                         gamma_de, eps_rel_u, c_min, c_max)


def update_penalty_ineq(c, h_now, h_prev, eps_h, eta, beta_in, beta_de, gamma_in, gamma_de, eps_rel_u,
                        c_min, c_max):
    return _penalty_rule(np.asarray(c, float), np.asarray(h_now, float), np.asarray(h_prev, float),
                         eps_h, eta, beta_in, beta_de, gamma_in, gamma_de, eps_rel_u, c_min, c_max)


# --- residuals and convergence ---------------------------------------------

@dataclass
class Residuals:
    """Stored constraint values of one outer iteration (``hbar`` transformed)."""

    g: np.ndarray      # (N, Ng)
    hbar: np.ndarray   # (N, Nh)
    gT: np.ndarray
    hbarT: np.ndarray
    T: float

    def regridded(self, T_new: float) -> "Residuals":
        if T_new == self.T:
            return self
        return Residuals(regrid(self.g, self.T, T_new), regrid(self.hbar, self.T, T_new),
                         self.gT, self.hbarT, T_new)

    def max_violation(self) -> float:
        parts = [0.0]
        if self.g.size:
            parts.append(float(np.max(np.abs(self.g))))
        if self.hbar.size:
            parts.append(float(np.max(self.hbar)))
        if self.gT.size:
            parts.append(float(np.max(np.abs(self.gT))))
        if self.hbarT.size:
            parts.append(float(np.max(self.hbarT)))
        return max(parts)


def compute_residuals(problem: Problem, grid: Grid, x, u, p, mult: MultiplierState) -> Residuals:
    aug = Augmented(problem)
    d = problem.dims
    t = grid.t
    g = np.zeros((grid.N, d.Ng))
    hbar = np.zeros((grid.N, d.Nh))
    if d.Ng or d.Nh:
        for k in range(grid.N):
            g[k], hbar[k] = aug.path_residuals(x[k], u[k], p, t[k], mult.mu_h[k], mult.c_h[k])
    gT, hbarT = aug.terminal_residuals(x[-1], p, grid.T, mult)
    return Residuals(g, hbar, np.asarray(gT, float), np.asarray(hbarT, float), grid.T)


@dataclass
class ConvergenceStatus:
    converged: bool
    reasons: list[str] = field(default_factory=list)

    @property
    def reason(self) -> str:
        return "converged" if self.converged else "; ".join(self.reasons)


def _first_bad(values, tol):
    bad = np.flatnonzero(values > tol)
    return int(bad[0]) if bad.size else None


def check_convergence(res: Residuals, eta: float, al: ALOptions) -> ConvergenceStatus:
    """All terminal and path residual bounds plus the ``eta`` gate; absent classes are skipped."""
    reasons = []
    checks = [
        ("terminal equality", np.abs(res.gT), al.eps_gT),
        ("terminal inequality", np.maximum(res.hbarT, 0.0), al.eps_hT),
        ("path equality", np.max(np.abs(res.g), axis=0) if res.g.size else np.zeros(0), al.eps_g),
        ("path inequality", np.max(np.maximum(res.hbar, 0.0), axis=0) if res.hbar.size else np.zeros(0),
         al.eps_h),
    ]
    for label, vals, tol in checks:
        if vals.size:
            idx = _first_bad(vals, np.broadcast_to(tol, vals.shape))
            if idx is not None:
                reasons.append(f"{label} index {idx}")
    if not eta <= al.eps_rel_c:
        reasons.append("inner optimality")
    return ConvergenceStatus(not reasons, reasons)


# --- outer loop ------------------------------------------------------------

@dataclass
class OuterDiagnostics:
    iteration: int
    inner_iterations: int
    eta: float
    cost: float
    augmented_cost: float
    max_violation: float
    reason: str


@dataclass
class SolverSolution:
    point: DecisionPoint
    x: np.ndarray
    mult: MultiplierState
    residuals: Residuals
    status: ConvergenceStatus
    eta: float
    outer_iterations: int
    inner_iterations: int
    cost: float
    diagnostics: list[OuterDiagnostics] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status.converged

    @property
    def status_label(self) -> str:
        return "converged" if self.converged else "iteration_limit"

    @property
    def grid(self) -> Grid:
        return Grid(self.point.u.shape[0], self.point.T)


def plain_cost(problem: Problem, grid: Grid, x, u, p) -> float:
    t = grid.t
    lv = np.array([problem.l(x[k], u[k], p, t[k]) for k in range(grid.N)], dtype=float)
    return float(problem.V(x[-1], p, grid.T) + quadrature(grid, lv))


def _update(mult: MultiplierState, res: Residuals, prev: Residuals | None, eta: float,
            al: ALOptions) -> MultiplierState:
    new = mult.copy()
    mu_args = (eta, al.rho, al.eps_rel_u, al.mu_max)
    new.mu_g = update_multiplier_eq(mult.mu_g, mult.c_g, res.g, al.eps_g, *mu_args)
    new.mu_gT = update_multiplier_eq(mult.mu_gT, mult.c_gT, res.gT, al.eps_gT, *mu_args)
    new.mu_h = update_multiplier_ineq(mult.mu_h, mult.c_h, res.hbar, al.eps_h, *mu_args)
    new.mu_hT = update_multiplier_ineq(mult.mu_hT, mult.c_hT, res.hbarT, al.eps_hT, *mu_args)
    if prev is not None:
        prev = prev.regridded(res.T)
        c_args = (eta, al.beta_in, al.beta_de, al.gamma_in, al.gamma_de, al.eps_rel_u, al.c_min, al.c_max)
        new.c_g = update_penalty_eq(mult.c_g, res.g, prev.g, al.eps_g, *c_args)
        new.c_gT = update_penalty_eq(mult.c_gT, res.gT, prev.gT, al.eps_gT, *c_args)
        new.c_h = update_penalty_ineq(mult.c_h, res.hbar, prev.hbar, al.eps_h, *c_args)
        new.c_hT = update_penalty_ineq(mult.c_hT, res.hbarT, prev.hbarT, al.eps_hT, *c_args)
    return new


def solve(problem: Problem, x0, bounds: Bounds, init: DecisionPoint, al: ALOptions, inner: InnerOptions,
          mult: MultiplierState | None = None, prev_residuals: Residuals | None = None,
          workspace: Workspace | None = None) -> SolverSolution:
    """Outer augmented Lagrangian iterations around :func:`solve_inner`.

    ``prev_residuals`` (from a previous MPC step) enables the penalty update
    already in the first iteration.  The returned ``mult`` holds the updated
    multipliers/penalties for warm starting; ``residuals`` are those of the
    returned iterate.
    """
    if inner.eps_rel_c != al.eps_rel_c:
        inner = InnerOptions(**{**vars(inner), "eps_rel_c": al.eps_rel_c})
    N = init.u.shape[0]
    mult = MultiplierState.initial(problem.dims, N, al.mu0, al.c0) if mult is None else mult.copy()
    ws = workspace if workspace is not None else Workspace()
    point = init
    diags: list[OuterDiagnostics] = []
    total_inner = 0
    prev = prev_residuals
    x = None
    for i in range(1, al.i_max + 1):
        ir = solve_inner(problem, x0, bounds, mult, point, inner, ws)
        point, x, eta = ir.point, ir.x, ir.eta
        total_inner += ir.iterations
        grid = Grid(N, point.T)
        res = compute_residuals(problem, grid, x, point.u, point.p, mult)
        status = check_convergence(res, eta, al)
        diags.append(OuterDiagnostics(i, ir.iterations, eta, plain_cost(problem, grid, x, point.u, point.p),
                                      ir.cost_history[-1], res.max_violation(), status.reason))
        if status.converged:
            break
        mult = _update(mult, res, prev, eta, al)
        prev = res
    return SolverSolution(point, x, mult, res, status, eta, i, total_inner, diags[-1].cost, diags)


def estimate_penalty_min(problem: Problem, x0, bounds: Bounds, init: DecisionPoint, fraction: float = 0.1,
                         floor: float = 1e-6) -> float:
    """Heuristic lower penalty bound for MPC use.

    Compares the cost magnitude with the squared constraint magnitude on the
    initial trajectory: ``max(floor, fraction * |J| / sum of squared constraint
    values)``.  Inactive constraints count with their magnitude, so the bound
    stays meaningful when the initial trajectory is feasible.
    """
    N = init.u.shape[0]
    grid = Grid(N, init.T)
    x = integrate_forward(problem, grid, init.u, init.p, x0)
    d = problem.dims
    t = grid.t
    p = init.p
    path = np.zeros(N)
    for k in range(N):
        if d.Ng:
            path[k] += float(np.sum(np.asarray(problem.g(x[k], init.u[k], p, t[k])) ** 2))
        if d.Nh:
            path[k] += float(np.sum(np.asarray(problem.h(x[k], init.u[k], p, t[k])) ** 2))
    sq = float(quadrature(grid, path))
    if d.NgT:
        sq += float(np.sum(np.asarray(problem.gT(x[-1], p, init.T)) ** 2))
    if d.NhT:
        sq += float(np.sum(np.asarray(problem.hT(x[-1], p, init.T)) ** 2))
    J = abs(plain_cost(problem, grid, x, init.u, p))
    if sq <= 0 or J <= 0:
        return floor
    return max(floor, fraction * J / sq)
