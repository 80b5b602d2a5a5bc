"""Flat option schema shared by the library, config files and ``--set``.

Keys follow the established names of the original C/Matlab toolbox surface
(``Nhor``, ``MaxGradIter``, ...); each maps onto a snake_case field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields

import numpy as np

from .auglag import ALOptions
from .errors import ConfigError
from .gradient import InnerOptions, LineSearchConfig
from .integrators import METHODS, IntegratorChoice

_LINE_SEARCH_ALIASES = {
    "adaptive": "adaptive",
    "explicit1": "explicit_v1",
    "explicit2": "explicit_v2",
    "explicit_v1": "explicit_v1",
    "explicit_v2": "explicit_v2",
}
_INTEGRATOR_ALIASES = {m: m for m in METHODS} | {"ruku45": "rk45_adaptive", "rk45": "rk45_adaptive"}


def _opt(key, default, kind, doc=""):
    return field(default=default, metadata={"key": key, "kind": kind, "doc": doc})


def _vec(key, doc=""):
    return field(default=None, metadata={"key": key, "kind": "vector", "doc": doc})


@dataclass
class SolverOptions:
    # horizon and sampling
    n_hor: int = _opt("Nhor", 20, "int", "number of horizon grid points")
    T: float = _opt("Thor", 1.0, "float", "prediction horizon (initial value when free)")
    T_min: float = _opt("Tmin", 1e-3, "float", "lower bound of a free horizon")
    T_max: float = _opt("Tmax", 1e8, "float", "upper bound of a free horizon")
    dt: float = _opt("dt", 0.01, "float", "sampling time")
    optimize_T: bool = _opt("OptimTime", False, "bool", "treat the horizon as decision variable")
    optimize_p: bool = _opt("OptimParam", False, "bool", "treat parameters as decision variables")
    shift_control: bool = _opt("ShiftControl", True, "bool", "time-shift the warm start by dt")
    # iteration limits
    j_max: int = _opt("MaxGradIter", 2, "int", "inner gradient iterations")
    i_max: int = _opt("MaxMultIter", 1, "int", "outer multiplier iterations")
    # integration
    integrator: str = _opt("Integrator", "heun", "integrator", "euler|modified_euler|heun|rk45_adaptive")
    integrator_rel_tol: float = _opt("IntegratorRelTol", 1e-6, "float")
    integrator_abs_tol: float = _opt("IntegratorAbsTol", 1e-8, "float")
    integrator_min_step: float = _opt("IntegratorMinStepSize", 1e-12, "float")
    # line search
    line_search: str = _opt("LineSearch", "adaptive", "line_search", "adaptive|explicit1|explicit2")
    ls_init: float = _opt("LineSearchInit", 1e-3, "float", "centre of the initial adaptive interval")
    ls_interval_factor: float = _opt("LineSearchIntervalFactor", 0.85, "float")
    ls_adapt_factor: float = _opt("LineSearchAdaptFactor", 2.0, "float")
    ls_interval_tol: float = _opt("LineSearchIntervalTol", 0.1, "float")
    ls_min: float = _opt("LineSearchMin", 1e-10, "float")
    ls_max: float = _opt("LineSearchMax", 1e2, "float")
    ls_fallback: float = _opt("LineSearchFallback", 1e-4, "float", "explicit step when the formula fails")
    gamma_p: float = _opt("OptimParamLineSearchFactor", 1.0, "float")
    gamma_T: float = _opt("OptimTimeLineSearchFactor", 1.0, "float")
    # outer loop
    eps_rel_c: float = _opt("ConvergenceGradientRelTol", 1e-6, "float")
    eps_rel_u: object = _opt("AugLagUpdateGradientRelTol", None, "optional_float",
                             "multiplier/penalty update gate; null means 10 * ConvergenceGradientRelTol")
    constraints_abs_tol: object = _opt("ConstraintsAbsTol", 1e-4, "scalar_or_vector",
                                       "scalar, or Ng+Nh+NgT+NhT values")
    rho: float = _opt("MultiplierDampingFactor", 0.0, "float")
    mu_max: float = _opt("MultiplierMax", 1e6, "float")
    mu0: float = _opt("MultiplierInit", 0.0, "float")
    c0: float = _opt("PenaltyInit", 1.0, "float")
    c_min: float = _opt("PenaltyMin", 1e-4, "float")
    c_max: float = _opt("PenaltyMax", 1e6, "float")
    beta_in: float = _opt("PenaltyIncreaseFactor", 2.0, "float")
    beta_de: float = _opt("PenaltyDecreaseFactor", 0.5, "float")
    gamma_in: float = _opt("PenaltyIncreaseThreshold", 0.9, "float")
    gamma_de: float = _opt("PenaltyDecreaseThreshold", 0.2, "float")
    # scaling
    x_scale: object = _vec("xScale")
    x_offset: object = _vec("xOffset")
    u_scale: object = _vec("uScale")
    u_offset: object = _vec("uOffset")

    def __post_init__(self):
        self.integrator = _INTEGRATOR_ALIASES.get(self.integrator, self.integrator)
        self.line_search = _LINE_SEARCH_ALIASES.get(self.line_search, self.line_search)

    # --- conversions -------------------------------------------------------
    def integrator_choice(self) -> IntegratorChoice:
        return IntegratorChoice(self.integrator, self.integrator_rel_tol, self.integrator_abs_tol,
                                self.integrator_min_step)

    def line_search_config(self) -> LineSearchConfig:
        return LineSearchConfig(
            strategy=self.line_search, alpha_init=self.ls_init, interval_factor=self.ls_interval_factor,
            adapt_factor=self.ls_adapt_factor, interval_tol=self.ls_interval_tol, alpha_min=self.ls_min,
            alpha_max=self.ls_max, alpha0=self.ls_fallback, gamma_p=self.gamma_p, gamma_T=self.gamma_T,
        )

    def inner_options(self) -> InnerOptions:
        return InnerOptions(self.j_max, self.eps_rel_c, self.line_search_config(), self.integrator_choice(),
                            self.optimize_p, self.optimize_T)

    def tolerances(self, dims) -> tuple:
        """Per-class tolerance vectors ``(eps_g, eps_h, eps_gT, eps_hT)``."""
        counts = (dims.Ng, dims.Nh, dims.NgT, dims.NhT)
        tol = np.atleast_1d(np.asarray(self.constraints_abs_tol, dtype=float))
        if tol.size == 1:
            return tuple(np.full(n, tol[0]) for n in counts)
        if tol.size != sum(counts):
            raise ConfigError(f"ConstraintsAbsTol needs 1 or {sum(counts)} values, got {tol.size}")
        return tuple(np.split(tol, np.cumsum(counts)[:-1]))

    def al_options(self, dims) -> ALOptions:
        eg, eh, egT, ehT = self.tolerances(dims)
        return ALOptions(
            i_max=self.i_max, eps_g=eg, eps_h=eh, eps_gT=egT, eps_hT=ehT, eps_rel_c=self.eps_rel_c,
            eps_rel_u=self.eps_rel_u, rho=self.rho, beta_in=self.beta_in, beta_de=self.beta_de,
            gamma_in=self.gamma_in, gamma_de=self.gamma_de, mu_max=self.mu_max, c_min=self.c_min,
            c_max=self.c_max, mu0=self.mu0, c0=self.c0,
        )

    def validate(self, dims=None) -> None:
        """Raise :class:`ConfigError` if the combination is unusable."""
        try:
            if self.n_hor < 2:
                raise ValueError("Nhor must be at least 2")
            if not self.T > 0 or not self.dt > 0:
                raise ValueError("Thor and dt must be positive")
            if self.dt > self.T and not self.optimize_T:
                raise ValueError("dt must not exceed Thor")
            if self.T_min > self.T_max:
                raise ValueError("Tmin must not exceed Tmax")
            self.inner_options()
            if dims is not None:
                self.al_options(dims)
            else:
                ALOptions(i_max=self.i_max, eps_rel_c=self.eps_rel_c, eps_rel_u=self.eps_rel_u, rho=self.rho,
                          beta_in=self.beta_in, beta_de=self.beta_de, gamma_in=self.gamma_in,
                          gamma_de=self.gamma_de, mu_max=self.mu_max, c_min=self.c_min, c_max=self.c_max)
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    # --- flat key/value surface --------------------------------------------
    @classmethod
    def keys(cls) -> dict[str, str]:
        """Option key -> field name."""
        return {f.metadata["key"]: f.name for f in fields(cls)}

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            val = getattr(self, f.name)
            if isinstance(val, np.ndarray):
                val = val.tolist()
            out[f.metadata["key"]] = val
        return out

    def updated(self, overrides: dict) -> "SolverOptions":
        """Copy with ``overrides`` (keys as in :meth:`keys`) applied and type-checked."""
        keymap = self.keys()
        by_name = {f.name: f for f in fields(self)}
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        for key, raw in overrides.items():
            if key not in keymap:
                raise ConfigError(f"unknown option key {key!r}")
            fd = by_name[keymap[key]]
            values[fd.name] = coerce(key, fd.metadata["kind"], raw)
        return SolverOptions(**values)

    @classmethod
    def from_dict(cls, data: dict) -> "SolverOptions":
        return cls().updated(data)


def parse_value(text: str):
    """Interpret a ``--set`` right-hand side: JSON if it parses, else the raw string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def coerce(key: str, kind: str, raw):
    def fail(msg="has wrong type"):
        raise ConfigError(f"option {key!r} {msg}: {raw!r}")

    if isinstance(raw, str) and kind not in ("integrator", "line_search"):
        raw = parse_value(raw) if kind != "bool" else raw
    if kind == "int":
        if isinstance(raw, bool) or not isinstance(raw, (int, float)) or float(raw) != int(raw):
            fail("expects an integer")
        return int(raw)
    if kind == "optional_float" and raw is None:
        return None
    if kind in ("float", "optional_float"):
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            fail("expects a number")
        return float(raw)
    if kind == "bool":
        if isinstance(raw, bool):
            return raw
        if isinstance(raw, str) and raw.lower() in ("true", "on", "1", "yes", "false", "off", "0", "no"):
            return raw.lower() in ("true", "on", "1", "yes")
        if isinstance(raw, int) and raw in (0, 1):
            return bool(raw)
        fail("expects a boolean")
    if kind == "integrator":
        if not isinstance(raw, str) or raw not in _INTEGRATOR_ALIASES:
            fail(f"must be one of {sorted(_INTEGRATOR_ALIASES)}")
        return _INTEGRATOR_ALIASES[raw]
    if kind == "line_search":
        if not isinstance(raw, str) or raw not in _LINE_SEARCH_ALIASES:
            fail(f"must be one of {sorted(_LINE_SEARCH_ALIASES)}")
        return _LINE_SEARCH_ALIASES[raw]
    if kind in ("vector", "scalar_or_vector"):
        if raw is None and kind == "vector":
            return None
        if isinstance(raw, bool):
            fail()
        if isinstance(raw, (int, float)):
            return float(raw) if kind == "scalar_or_vector" else [float(raw)]
        if isinstance(raw, (list, tuple)) and all(isinstance(v, (int, float)) and not isinstance(v, bool)
                                                  for v in raw):
            return [float(v) for v in raw]
        fail("expects a number or a list of numbers")
    raise AssertionError(kind)  # pragma: no cover
