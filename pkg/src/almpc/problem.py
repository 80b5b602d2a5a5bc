"""Problem contract: dynamics, costs, constraints and their derivatives.

A problem is a subclass of :class:`Problem` that sets ``dims`` and overrides
the value hooks it needs together with the matching derivative hooks.
Jacobians are only ever requested in multiplied (transposed) form, e.g.
``dfdx_mult(x, u, p, t, vec)`` returns ``(df/dx)^T vec``.

Hook signatures::

    f, l, g, h, dldx, dldu, dldp           (x, u, p, t)
    V, gT, hT, dVdx, dVdp, dVdT            (x, p, T)
    dfdx_mult, dfdu_mult, dfdp_mult, ...   (x, u, p, t, vec)
    dgTdx_mult, dgTdp_mult, dgTdT_mult,... (x, p, T, vec)
"""

from __future__ import annotations

import copy
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import NumericalFailure

__all__ = [
    "ProblemDims",
    "Problem",
    "Bounds",
    "ValidationReport",
    "MassOperator",
    "validate",
    "eval_dynamics",
    "scale_to_internal",
    "unscale_from_internal",
    "ScaledProblem",
    "FiniteDifferenceProblem",
    "check_derivatives",
    "hook_present",
    "PROBLEMS",
    "register_problem",
]


@dataclass(frozen=True)
class ProblemDims:
    Nx: int
    Nu: int
    Np: int = 0
    Ng: int = 0
    Nh: int = 0
    NgT: int = 0
    NhT: int = 0

    def __post_init__(self):
        for name in ("Nx", "Nu", "Np", "Ng", "Nh", "NgT", "NhT"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.Nx < 1:
            raise ValueError("Nx must be at least 1")


def _default(fn):
    fn.__hook_default__ = True
    return fn


def hook_present(problem, name: str) -> bool:
    """True if ``problem`` supplies its own implementation of hook ``name``."""
    attr = getattr(problem, name, None)
    if attr is None:
        return False
    return not getattr(attr, "__hook_default__", False)


class Problem:
    """Base class for optimal control problems.

    Subclasses set ``self.dims`` (a :class:`ProblemDims`) and may set
    ``self.mass_matrix`` (constant, invertible; ``None`` means identity).
    ``xdes``/``udes`` are setpoints handed to cost hooks by convention;
    ``user_params`` is never read by the solver.
    """

    name = "problem"
    dims: ProblemDims
    mass_matrix: np.ndarray | None = None
    #: False for problems whose derivatives come from finite differences.
    realtime = True

    def __init__(self, user_params=None):
        self.user_params = user_params
        self._mass = None

    # setpoint handling -------------------------------------------------
    def with_setpoint(self, xdes=None, udes=None):
        """Shallow copy with a different setpoint (problems stay immutable)."""
        other = copy.copy(self)
        if xdes is not None:
            other.xdes = np.asarray(xdes, dtype=float)
        if udes is not None:
            other.udes = np.asarray(udes, dtype=float)
        return other

    def nominal_state(self) -> np.ndarray:
        """A representative interior state, used for validation and checks."""
        return np.full(self.dims.Nx, 0.5)

    def nominal_control(self) -> np.ndarray:
        return np.zeros(self.dims.Nu)

    @property
    def mass(self) -> "MassOperator":
        if getattr(self, "_mass", None) is None:
            self._mass = MassOperator(self.mass_matrix, self.dims.Nx)
        return self._mass

    # value hooks ---------------------------------------------------------
    def f(self, x, u, p, t):
        raise NotImplementedError

    @_default
    def l(self, x, u, p, t):
        return 0.0

    @_default
    def V(self, x, p, T):
        return 0.0

    @_default
    def g(self, x, u, p, t):
        return np.zeros(0)

    @_default
    def h(self, x, u, p, t):
        return np.zeros(0)

    @_default
    def gT(self, x, p, T):
        return np.zeros(0)

    @_default
    def hT(self, x, p, T):
        return np.zeros(0)

    # dynamics derivatives ------------------------------------------------
    @_default
    def dfdx_mult(self, x, u, p, t, vec):
        raise NotImplementedError("dfdx_mult")

    @_default
    def dfdu_mult(self, x, u, p, t, vec):
        raise NotImplementedError("dfdu_mult")

    @_default
    def dfdp_mult(self, x, u, p, t, vec):
        return np.zeros(self.dims.Np)

    # cost derivatives (zero defaults match the zero default costs) ---------
    @_default
    def dldx(self, x, u, p, t):
        return np.zeros(self.dims.Nx)

    @_default
    def dldu(self, x, u, p, t):
        return np.zeros(self.dims.Nu)

    @_default
    def dldp(self, x, u, p, t):
        return np.zeros(self.dims.Np)

    @_default
    def dVdx(self, x, p, T):
        return np.zeros(self.dims.Nx)

    @_default
    def dVdp(self, x, p, T):
        return np.zeros(self.dims.Np)

    @_default
    def dVdT(self, x, p, T):
        return 0.0

    # constraint derivatives ----------------------------------------------
    @_default
    def dgdx_mult(self, x, u, p, t, vec):
        return np.zeros(self.dims.Nx)

    @_default
    def dgdu_mult(self, x, u, p, t, vec):
        return np.zeros(self.dims.Nu)

    @_default
    def dgdp_mult(self, x, u, p, t, vec):
        return np.zeros(self.dims.Np)

    @_default
    def dhdx_mult(self, x, u, p, t, vec):
        return np.zeros(self.dims.Nx)

    @_default
    def dhdu_mult(self, x, u, p, t, vec):
        return np.zeros(self.dims.Nu)

    @_default
    def dhdp_mult(self, x, u, p, t, vec):
        return np.zeros(self.dims.Np)

    @_default
    def dgTdx_mult(self, x, p, T, vec):
        return np.zeros(self.dims.Nx)

    @_default
    def dgTdp_mult(self, x, p, T, vec):
        return np.zeros(self.dims.Np)

    @_default
    def dgTdT_mult(self, x, p, T, vec):
        return 0.0

    @_default
    def dhTdx_mult(self, x, p, T, vec):
        return np.zeros(self.dims.Nx)

    @_default
    def dhTdp_mult(self, x, p, T, vec):
        return np.zeros(self.dims.Np)

    @_default
    def dhTdT_mult(self, x, p, T, vec):
        return 0.0


    # node-batched hooks ----------------------------------------------------
    # X is (N, Nx), U is (N, Nu), t is (N,), W holds one weight row per node.
    # The defaults loop over the nodewise hooks (and skip hooks left at their
    # zero default); problems may override them with vectorized versions.
    def _nodes(self, name, width, X, U, p, t, W=None):
        N = len(t)
        if not hook_present(self, name):
            return np.zeros((N, width))
        fn = getattr(self, name)
        if W is None:
            rows = [fn(X[k], U[k], p, t[k]) for k in range(N)]
        else:
            rows = [fn(X[k], U[k], p, t[k], W[k]) for k in range(N)]
        return np.asarray(rows, dtype=float).reshape(N, width)

    def l_nodes(self, X, U, p, t):
        return self._nodes("l", 1, X, U, p, t)[:, 0]

    def g_nodes(self, X, U, p, t):
        return self._nodes("g", self.dims.Ng, X, U, p, t)

    def h_nodes(self, X, U, p, t):
        return self._nodes("h", self.dims.Nh, X, U, p, t)

    def dldx_nodes(self, X, U, p, t):
        return self._nodes("dldx", self.dims.Nx, X, U, p, t)

    def dldu_nodes(self, X, U, p, t):
        return self._nodes("dldu", self.dims.Nu, X, U, p, t)

    def dgdx_mult_nodes(self, X, U, p, t, W):
        return self._nodes("dgdx_mult", self.dims.Nx, X, U, p, t, W)

    def dgdu_mult_nodes(self, X, U, p, t, W):
        return self._nodes("dgdu_mult", self.dims.Nu, X, U, p, t, W)

    def dhdx_mult_nodes(self, X, U, p, t, W):
        return self._nodes("dhdx_mult", self.dims.Nx, X, U, p, t, W)

    def dhdu_mult_nodes(self, X, U, p, t, W):
        return self._nodes("dhdu_mult", self.dims.Nu, X, U, p, t, W)


class MassOperator:
    """Cached LU factorization of a constant mass matrix."""

    def __init__(self, M, n):
        if M is None:
            self.identity = True
            self.matrix = None
            self._lu = None
            return
        M = np.asarray(M, dtype=float)
        if M.shape != (n, n):
            raise ValueError(f"mass matrix must be {n}x{n}, got {M.shape}")
        self.matrix = M
        self.identity = bool(np.array_equal(M, np.eye(n)))
        self._lu = None if self.identity else scipy.linalg.lu_factor(M, check_finite=True)

    def solve(self, rhs):
        if self.identity:
            return rhs
        return scipy.linalg.lu_solve(self._lu, rhs)

    def solve_T(self, rhs):
        if self.identity:
            return rhs
        return scipy.linalg.lu_solve(self._lu, rhs, trans=1)


@dataclass
class Bounds:
    """Box constraints on (u, p, T) plus optional variable scaling."""

    u_min: np.ndarray
    u_max: np.ndarray
    p_min: np.ndarray = field(default_factory=lambda: np.zeros(0))
    p_max: np.ndarray = field(default_factory=lambda: np.zeros(0))
    T_min: float = 0.0
    T_max: float = np.inf
    x_scale: np.ndarray | None = None
    x_offset: np.ndarray | None = None
    u_scale: np.ndarray | None = None
    u_offset: np.ndarray | None = None

    def __post_init__(self):
        for name in ("u_min", "u_max", "p_min", "p_max"):
            setattr(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        for name in ("x_scale", "x_offset", "u_scale", "u_offset"):
            val = getattr(self, name)
            if val is not None:
                setattr(self, name, np.atleast_1d(np.asarray(val, dtype=float)))

    @classmethod
    def for_dims(cls, dims: ProblemDims, umax=np.inf, **kw):
        umax = np.broadcast_to(np.asarray(umax, dtype=float), (dims.Nu,)).copy()
        return cls(u_min=kw.pop("u_min", -umax), u_max=kw.pop("u_max", umax), **kw)


@dataclass
class ValidationReport:
    findings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.findings

    def __bool__(self):
        return self.ok

    def __str__(self):
        return "ok" if self.ok else "\n".join(self.findings)


# (value hook, derivative hooks that become mandatory once it is supplied)
_COST_DERIVS = {
    "l": ("dldx", "dldu", "dldp"),
    "V": ("dVdx", "dVdp", "dVdT"),
}
_CONSTRAINT_DERIVS = {
    "g": ("Ng", ("dgdx_mult", "dgdu_mult", "dgdp_mult")),
    "h": ("Nh", ("dhdx_mult", "dhdu_mult", "dhdp_mult")),
    "gT": ("NgT", ("dgTdx_mult", "dgTdp_mult", "dgTdT_mult")),
    "hT": ("NhT", ("dhTdx_mult", "dhTdp_mult", "dhTdT_mult")),
}


def _applicable(name: str, dims: ProblemDims, optimize_T: bool) -> bool:
    if name.endswith(("dp", "dp_mult")):
        return dims.Np > 0
    if name.endswith(("du", "du_mult")):
        return dims.Nu > 0
    if name.endswith(("dT", "dT_mult")):
        return optimize_T
    return True


def required_hooks(problem: Problem, optimize_T: bool = False) -> list[str]:
    dims = problem.dims
    req = ["f", "dfdx_mult"]
    if dims.Nu:
        req.append("dfdu_mult")
    if dims.Np:
        req.append("dfdp_mult")
    for value, derivs in _COST_DERIVS.items():
        if hook_present(problem, value):
            req += [d for d in derivs if _applicable(d, dims, optimize_T)]
    for value, (count, derivs) in _CONSTRAINT_DERIVS.items():
        if getattr(dims, count):
            req.append(value)
            req += [d for d in derivs if _applicable(d, dims, optimize_T)]
    return req


def validate(problem: Problem, bounds: Bounds, optimize_T: bool = False) -> ValidationReport:
    """Collect every contract violation; an empty report means success."""
    report = ValidationReport()
    dims = problem.dims
    for name in required_hooks(problem, optimize_T):
        if not hook_present(problem, name):
            kind = "value" if name in ("f", "g", "h", "gT", "hT") else "derivative"
            report.findings.append(f"missing {kind} hook {name}")

    if problem.mass_matrix is not None:
        M = np.asarray(problem.mass_matrix, dtype=float)
        if M.shape != (dims.Nx, dims.Nx):
            report.findings.append(f"mass matrix shape {M.shape} != ({dims.Nx}, {dims.Nx})")
        else:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
                lu, _ = scipy.linalg.lu_factor(M)
            d = np.abs(np.diag(lu))
            if d.min() <= 1e-12 * max(d.max(), 1.0):
                report.findings.append("mass matrix is singular (DAE systems are not supported)")

    for lo, hi, label in ((bounds.u_min, bounds.u_max, "control"), (bounds.p_min, bounds.p_max, "parameter")):
        expected = dims.Nu if label == "control" else dims.Np
        if lo.size != expected or hi.size != expected:
            report.findings.append(f"{label} bound size mismatch: expected {expected}")
            continue
        for i in np.flatnonzero(lo > hi):
            report.findings.append(f"inverted {label} bound, index {i}")
    if bounds.T_min > bounds.T_max:
        report.findings.append("inverted horizon bound")
    for name, n in (("x_scale", dims.Nx), ("u_scale", dims.Nu), ("x_offset", dims.Nx), ("u_offset", dims.Nu)):
        val = getattr(bounds, name)
        if val is None:
            continue
        if val.size != n:
            report.findings.append(f"{name} size mismatch: expected {n}")
        elif name.endswith("scale") and np.any(val <= 0):
            report.findings.append(f"{name} must be strictly positive")

    if not report.ok:
        return report
    _check_output_dims(problem, optimize_T, report)
    return report


def _check_output_dims(problem, optimize_T, report):
    dims = problem.dims
    x = problem.nominal_state()
    u = problem.nominal_control()
    p = np.zeros(dims.Np)
    t, T = 0.0, 1.0
    expect = {
        "f": ((x, u, p, t), dims.Nx),
        "g": ((x, u, p, t), dims.Ng),
        "h": ((x, u, p, t), dims.Nh),
        "gT": ((x, p, T), dims.NgT),
        "hT": ((x, p, T), dims.NhT),
        "dfdx_mult": ((x, u, p, t, np.ones(dims.Nx)), dims.Nx),
        "dfdu_mult": ((x, u, p, t, np.ones(dims.Nx)), dims.Nu),
        "dldx": ((x, u, p, t), dims.Nx),
        "dldu": ((x, u, p, t), dims.Nu),
        "dVdx": ((x, p, T), dims.Nx),
    }
    for name, (args, n) in expect.items():
        if name in ("g", "h", "gT", "hT") and n == 0:
            continue
        try:
            out = np.atleast_1d(np.asarray(getattr(problem, name)(*args), dtype=float))
        except Exception as exc:  # report, don't raise
            report.findings.append(f"hook {name} raised {type(exc).__name__}: {exc}")
            continue
        if out.shape != (n,):
            report.findings.append(f"hook {name} returned shape {out.shape}, expected ({n},)")


def eval_dynamics(problem: Problem, x, u, p, t) -> np.ndarray:
    """Right-hand side ``f`` of ``M xdot = f``; ``M`` is not applied."""
    out = np.asarray(problem.f(x, u, p, t), dtype=float)
    bad = np.flatnonzero(~np.isfinite(out))
    if bad.size:
        raise NumericalFailure(f"non-finite dynamics at index {bad[0]}", index=int(bad[0]))
    return out


# --- scaling ---------------------------------------------------------------

def _scale_pair(bounds: Bounds, which: str, n: int):
    scale = getattr(bounds, f"{which}_scale")
    offset = getattr(bounds, f"{which}_offset")
    scale = np.ones(n) if scale is None else scale
    offset = np.zeros(n) if offset is None else offset
    return scale, offset


def scale_to_internal(bounds: Bounds, vec, which: str = "x") -> np.ndarray:
    """``(raw - offset) / scale`` componentwise."""
    vec = np.asarray(vec, dtype=float)
    scale, offset = _scale_pair(bounds, which, vec.shape[-1])
    return (vec - offset) / scale


def unscale_from_internal(bounds: Bounds, vec, which: str = "x") -> np.ndarray:
    vec = np.asarray(vec, dtype=float)
    scale, offset = _scale_pair(bounds, which, vec.shape[-1])
    return vec * scale + offset


class ScaledProblem(Problem):
    """The wrapped problem expressed in scaled state/control coordinates.

    With ``x = Dx xs + ox`` and ``u = Du us + ou`` the scaled dynamics are
    ``(Dx^-1 M Dx) xs' = Dx^-1 f``; costs and constraints are unchanged in
    value, so multiplied Jacobians pick up the chain-rule factors below.
    """

    def __init__(self, base: Problem, bounds: Bounds):
        super().__init__(base.user_params)
        self.base = base
        self.dims = base.dims
        self.name = base.name
        self.sx, self.ox = _scale_pair(bounds, "x", base.dims.Nx)
        self.su, self.ou = _scale_pair(bounds, "u", base.dims.Nu)
        if base.mass_matrix is not None:
            M = np.asarray(base.mass_matrix, dtype=float)
            self.mass_matrix = (M * self.sx[None, :]) / self.sx[:, None]
        self.realtime = base.realtime

    def scaled_bounds(self, bounds: Bounds) -> Bounds:
        return replace(
            bounds,
            u_min=(bounds.u_min - self.ou) / self.su,
            u_max=(bounds.u_max - self.ou) / self.su,
            x_scale=None, x_offset=None, u_scale=None, u_offset=None,
        )

    def _xu(self, x, u):
        return x * self.sx + self.ox, u * self.su + self.ou

    def nominal_state(self):
        return (self.base.nominal_state() - self.ox) / self.sx

    def nominal_control(self):
        return (self.base.nominal_control() - self.ou) / self.su

    def f(self, x, u, p, t):
        return self.base.f(*self._xu(x, u), p, t) / self.sx

    def l(self, x, u, p, t):
        return self.base.l(*self._xu(x, u), p, t)

    def V(self, x, p, T):
        return self.base.V(x * self.sx + self.ox, p, T)

    def g(self, x, u, p, t):
        return self.base.g(*self._xu(x, u), p, t)

    def h(self, x, u, p, t):
        return self.base.h(*self._xu(x, u), p, t)

    def gT(self, x, p, T):
        return self.base.gT(x * self.sx + self.ox, p, T)

    def hT(self, x, p, T):
        return self.base.hT(x * self.sx + self.ox, p, T)

    def dfdx_mult(self, x, u, p, t, vec):
        return self.sx * self.base.dfdx_mult(*self._xu(x, u), p, t, vec / self.sx)

    def dfdu_mult(self, x, u, p, t, vec):
        return self.su * self.base.dfdu_mult(*self._xu(x, u), p, t, vec / self.sx)

    def dfdp_mult(self, x, u, p, t, vec):
        return self.base.dfdp_mult(*self._xu(x, u), p, t, vec / self.sx)

    def dldx(self, x, u, p, t):
        return self.sx * self.base.dldx(*self._xu(x, u), p, t)

    def dldu(self, x, u, p, t):
        return self.su * self.base.dldu(*self._xu(x, u), p, t)

    def dldp(self, x, u, p, t):
        return self.base.dldp(*self._xu(x, u), p, t)

    def dVdx(self, x, p, T):
        return self.sx * self.base.dVdx(x * self.sx + self.ox, p, T)

    def dVdp(self, x, p, T):
        return self.base.dVdp(x * self.sx + self.ox, p, T)

    def dVdT(self, x, p, T):
        return self.base.dVdT(x * self.sx + self.ox, p, T)

    def dgdx_mult(self, x, u, p, t, vec):
        return self.sx * self.base.dgdx_mult(*self._xu(x, u), p, t, vec)

    def dgdu_mult(self, x, u, p, t, vec):
        return self.su * self.base.dgdu_mult(*self._xu(x, u), p, t, vec)

    def dgdp_mult(self, x, u, p, t, vec):
        return self.base.dgdp_mult(*self._xu(x, u), p, t, vec)

    def dhdx_mult(self, x, u, p, t, vec):
        return self.sx * self.base.dhdx_mult(*self._xu(x, u), p, t, vec)

    def dhdu_mult(self, x, u, p, t, vec):
        return self.su * self.base.dhdu_mult(*self._xu(x, u), p, t, vec)

    def dhdp_mult(self, x, u, p, t, vec):
        return self.base.dhdp_mult(*self._xu(x, u), p, t, vec)

    def dgTdx_mult(self, x, p, T, vec):
        return self.sx * self.base.dgTdx_mult(x * self.sx + self.ox, p, T, vec)

    def dgTdp_mult(self, x, p, T, vec):
        return self.base.dgTdp_mult(x * self.sx + self.ox, p, T, vec)

    def dgTdT_mult(self, x, p, T, vec):
        return self.base.dgTdT_mult(x * self.sx + self.ox, p, T, vec)

    def dhTdx_mult(self, x, p, T, vec):
        return self.sx * self.base.dhTdx_mult(x * self.sx + self.ox, p, T, vec)

    def dhTdp_mult(self, x, p, T, vec):
        return self.base.dhTdp_mult(x * self.sx + self.ox, p, T, vec)

    def dhTdT_mult(self, x, p, T, vec):
        return self.base.dhTdT_mult(x * self.sx + self.ox, p, T, vec)


    # batched variants delegate to the base problem's (possibly vectorized) ones
    def _XU(self, X, U):
        return X * self.sx + self.ox, U * self.su + self.ou

    def l_nodes(self, X, U, p, t):
        return self.base.l_nodes(*self._XU(X, U), p, t)

    def g_nodes(self, X, U, p, t):
        return self.base.g_nodes(*self._XU(X, U), p, t)

    def h_nodes(self, X, U, p, t):
        return self.base.h_nodes(*self._XU(X, U), p, t)

    def dldx_nodes(self, X, U, p, t):
        return self.sx * self.base.dldx_nodes(*self._XU(X, U), p, t)

    def dldu_nodes(self, X, U, p, t):
        return self.su * self.base.dldu_nodes(*self._XU(X, U), p, t)

    def dgdx_mult_nodes(self, X, U, p, t, W):
        return self.sx * self.base.dgdx_mult_nodes(*self._XU(X, U), p, t, W)

    def dgdu_mult_nodes(self, X, U, p, t, W):
        return self.su * self.base.dgdu_mult_nodes(*self._XU(X, U), p, t, W)

    def dhdx_mult_nodes(self, X, U, p, t, W):
        return self.sx * self.base.dhdx_mult_nodes(*self._XU(X, U), p, t, W)

    def dhdu_mult_nodes(self, X, U, p, t, W):
        return self.su * self.base.dhdu_mult_nodes(*self._XU(X, U), p, t, W)


# --- finite differences ----------------------------------------------------

def _fd_step(v):
    return 1e-3 * np.maximum(1.0, np.abs(v))


def fd_gradient(fun: Callable[[np.ndarray], float], v) -> np.ndarray:
    """Five-point central difference gradient of a scalar function."""
    v = np.asarray(v, dtype=float)
    out = np.empty(v.size)
    steps = _fd_step(v)
    for i in range(v.size):
        e = np.zeros(v.size)
        e[i] = steps[i]
        # differences first, so a constant function gives exactly zero
        near = fun(v + e) - fun(v - e)
        far = fun(v + 2 * e) - fun(v - 2 * e)
        out[i] = (8 * near - far) / (12 * steps[i])
    return out


class FiniteDifferenceProblem(Problem):
    """Supplies every derivative hook of ``base`` by finite differences.

    Meant for prototyping and as a cross-check; far too slow for real-time use.
    """

    realtime = False

    def __init__(self, base: Problem):
        super().__init__(base.user_params)
        self.base = base
        self.dims = base.dims
        self.mass_matrix = base.mass_matrix
        self.name = base.name + "-fd"

    def __getattr__(self, item):
        # setpoints and helper attributes of the wrapped problem
        if item == "base":
            raise AttributeError(item)
        return getattr(self.base, item)

    def nominal_state(self):
        return self.base.nominal_state()

    def nominal_control(self):
        return self.base.nominal_control()

    def f(self, x, u, p, t):
        return self.base.f(x, u, p, t)

    def l(self, x, u, p, t):
        return self.base.l(x, u, p, t)

    def V(self, x, p, T):
        return self.base.V(x, p, T)

    def g(self, x, u, p, t):
        return self.base.g(x, u, p, t)

    def h(self, x, u, p, t):
        return self.base.h(x, u, p, t)

    def gT(self, x, p, T):
        return self.base.gT(x, p, T)

    def hT(self, x, p, T):
        return self.base.hT(x, p, T)

    def _path(self, name, wrt, x, u, p, t, vec=None):
        fn = getattr(self.base, name)

        def scalar(v):
            args = {"x": x, "u": u, "p": p}
            args[wrt] = v
            val = fn(args["x"], args["u"], args["p"], t)
            return float(val) if vec is None else float(np.dot(vec, val))

        return fd_gradient(scalar, {"x": x, "u": u, "p": p}[wrt])

    def _term(self, name, wrt, x, p, T, vec=None):
        fn = getattr(self.base, name)

        def scalar(v):
            args = {"x": x, "p": p, "T": T}
            args[wrt] = v if wrt != "T" else float(v[0])
            val = fn(args["x"], args["p"], args["T"])
            return float(val) if vec is None else float(np.dot(vec, val))

        start = {"x": x, "p": p, "T": np.array([T])}[wrt]
        out = fd_gradient(scalar, start)
        return float(out[0]) if wrt == "T" else out

    def dfdx_mult(self, x, u, p, t, vec):
        return self._path("f", "x", x, u, p, t, vec)

    def dfdu_mult(self, x, u, p, t, vec):
        return self._path("f", "u", x, u, p, t, vec)

    def dfdp_mult(self, x, u, p, t, vec):
        return self._path("f", "p", x, u, p, t, vec)

    def dldx(self, x, u, p, t):
        return self._path("l", "x", x, u, p, t)

    def dldu(self, x, u, p, t):
        return self._path("l", "u", x, u, p, t)

    def dldp(self, x, u, p, t):
        return self._path("l", "p", x, u, p, t)

    def dVdx(self, x, p, T):
        return self._term("V", "x", x, p, T)

    def dVdp(self, x, p, T):
        return self._term("V", "p", x, p, T)

    def dVdT(self, x, p, T):
        return self._term("V", "T", x, p, T)

    def dgdx_mult(self, x, u, p, t, vec):
        return self._path("g", "x", x, u, p, t, vec)

    def dgdu_mult(self, x, u, p, t, vec):
        return self._path("g", "u", x, u, p, t, vec)

    def dgdp_mult(self, x, u, p, t, vec):
        return self._path("g", "p", x, u, p, t, vec)

    def dhdx_mult(self, x, u, p, t, vec):
        return self._path("h", "x", x, u, p, t, vec)

    def dhdu_mult(self, x, u, p, t, vec):
        return self._path("h", "u", x, u, p, t, vec)

    def dhdp_mult(self, x, u, p, t, vec):
        return self._path("h", "p", x, u, p, t, vec)

    def dgTdx_mult(self, x, p, T, vec):
        return self._term("gT", "x", x, p, T, vec)

    def dgTdp_mult(self, x, p, T, vec):
        return self._term("gT", "p", x, p, T, vec)

    def dgTdT_mult(self, x, p, T, vec):
        return self._term("gT", "T", x, p, T, vec)

    def dhTdx_mult(self, x, p, T, vec):
        return self._term("hT", "x", x, p, T, vec)

    def dhTdp_mult(self, x, p, T, vec):
        return self._term("hT", "p", x, p, T, vec)

    def dhTdT_mult(self, x, p, T, vec):
        return self._term("hT", "T", x, p, T, vec)


# (derivative hook, value hook, differentiation variable, output count attr)
_DERIVATIVE_TABLE = [
    ("dfdx_mult", "f", "x", "Nx"), ("dfdu_mult", "f", "u", "Nx"), ("dfdp_mult", "f", "p", "Nx"),
    ("dldx", "l", "x", None), ("dldu", "l", "u", None), ("dldp", "l", "p", None),
    ("dVdx", "V", "x", None), ("dVdp", "V", "p", None), ("dVdT", "V", "T", None),
    ("dgdx_mult", "g", "x", "Ng"), ("dgdu_mult", "g", "u", "Ng"), ("dgdp_mult", "g", "p", "Ng"),
    ("dhdx_mult", "h", "x", "Nh"), ("dhdu_mult", "h", "u", "Nh"), ("dhdp_mult", "h", "p", "Nh"),
    ("dgTdx_mult", "gT", "x", "NgT"), ("dgTdp_mult", "gT", "p", "NgT"), ("dgTdT_mult", "gT", "T", "NgT"),
    ("dhTdx_mult", "hT", "x", "NhT"), ("dhTdp_mult", "hT", "p", "NhT"), ("dhTdT_mult", "hT", "T", "NhT"),
]


def relative_error(a, b, floor=1e-8) -> float:
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    num = np.max(np.abs(a - b)) if a.size else 0.0
    den = max(np.max(np.abs(a)) if a.size else 0.0, np.max(np.abs(b)) if b.size else 0.0, floor)
    return float(num / den)


def check_derivatives(problem: Problem, n_samples: int = 5, seed: int = 0, optimize_T: bool = False,
                      spread: float = 0.1) -> dict[str, float | None]:
    """Worst relative error of every derivative hook against finite differences.

    Sample points are random perturbations of the problem's nominal point.
    Hooks that do not apply to ``problem`` (e.g. parameter derivatives when
    ``Np == 0``) map to ``None``.
    """
    rng = np.random.default_rng(seed)
    dims = problem.dims
    fd = FiniteDifferenceProblem(problem)
    worst: dict[str, float | None] = {}
    for deriv, value, wrt, count in _DERIVATIVE_TABLE:
        n_out = getattr(dims, count) if count else 1
        applicable = n_out > 0 and (
            (wrt == "x") or (wrt == "u" and dims.Nu > 0) or (wrt == "p" and dims.Np > 0)
            or (wrt == "T" and optimize_T)
        )
        if value in ("l", "V") and not hook_present(problem, value):
            applicable = False
        if not applicable:
            worst[deriv] = None
            continue
        err = 0.0
        for _ in range(n_samples):
            x0, u0 = problem.nominal_state(), problem.nominal_control()
            x = x0 + spread * (1 + np.abs(x0)) * rng.standard_normal(dims.Nx)
            u = u0 + spread * (1 + np.abs(u0)) * rng.standard_normal(dims.Nu)
            p = getattr(problem, "nominal_parameters", lambda: np.zeros(dims.Np))()
            p = p + spread * (1 + np.abs(p)) * rng.standard_normal(dims.Np)
            t = float(rng.uniform(0.0, 1.0))
            T = float(rng.uniform(0.5, 2.0))
            vec = rng.standard_normal(n_out) if count else None
            path = value in ("f", "l", "g", "h")
            args = (x, u, p, t) if path else (x, p, T)
            if vec is not None:
                args = args + (vec,)
            err = max(err, relative_error(getattr(problem, deriv)(*args), getattr(fd, deriv)(*args)))
        worst[deriv] = err
    return worst


#: name -> zero-argument constructor; filled by the testbench
PROBLEMS: dict[str, Callable[[], Problem]] = {}


def register_problem(name: str):
    def deco(ctor):
        PROBLEMS[name] = ctor
        return ctor

    return deco
