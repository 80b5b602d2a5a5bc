"""Augmented cost terms and their derivatives at fixed multipliers.

Inequalities are turned into equalities through the analytically minimized
slack, ``hbar = max(h, -mu/c)``.  With this substitution the derivative of
``mu*hbar + c/2*hbar**2`` with respect to any variable is ``(mu + c*hbar)``
times the derivative of ``h``: on the inactive branch ``mu + c*hbar`` is
exactly zero, so no explicit case split is needed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problem import Problem, ProblemDims


def transform_inequality(h_val, mu_h, c_h):
    """Componentwise ``max(h, -mu/c)``."""
    return np.maximum(h_val, -np.asarray(mu_h) / np.asarray(c_h))


@dataclass
class MultiplierState:
    """Multipliers and penalties; path quantities are stored per grid node."""

    mu_g: np.ndarray
    c_g: np.ndarray
    mu_h: np.ndarray
    c_h: np.ndarray
    mu_gT: np.ndarray
    c_gT: np.ndarray
    mu_hT: np.ndarray
    c_hT: np.ndarray

    @classmethod
    def initial(cls, dims: ProblemDims, n_hor: int, mu0: float = 0.0, c0: float = 1.0):
        def full(*shape, val):
            return np.full(shape, float(val))

        return cls(
            mu_g=full(n_hor, dims.Ng, val=mu0), c_g=full(n_hor, dims.Ng, val=c0),
            mu_h=full(n_hor, dims.Nh, val=mu0), c_h=full(n_hor, dims.Nh, val=c0),
            mu_gT=full(dims.NgT, val=mu0), c_gT=full(dims.NgT, val=c0),
            mu_hT=full(dims.NhT, val=mu0), c_hT=full(dims.NhT, val=c0),
        )

    def copy(self) -> "MultiplierState":
        return MultiplierState(**{k: v.copy() for k, v in vars(self).items()})

    @property
    def n_hor(self) -> int:
        return self.mu_g.shape[0]

    def node(self, k):
        """Path multipliers/penalties at node ``k``."""
        return self.mu_g[k], self.c_g[k], self.mu_h[k], self.c_h[k]

    def between(self, k, theta):
        """Linear interpolation of the path quantities inside interval ``k``."""
        if theta == 0.0:
            return self.node(k)
        a, b = 1.0 - theta, theta
        return (
            a * self.mu_g[k] + b * self.mu_g[k + 1], a * self.c_g[k] + b * self.c_g[k + 1],
            a * self.mu_h[k] + b * self.mu_h[k + 1], a * self.c_h[k] + b * self.c_h[k + 1],
        )


class Augmented:
    """Evaluates l-bar, V-bar and their partial derivatives for one problem."""

    def __init__(self, problem: Problem):
        self.problem = problem
        d = problem.dims
        self.has_g, self.has_h = d.Ng > 0, d.Nh > 0
        self.has_gT, self.has_hT = d.NgT > 0, d.NhT > 0

    # path -----------------------------------------------------------------
    def path_residuals(self, x, u, p, t, mu_h, c_h):
        pb = self.problem
        g = pb.g(x, u, p, t) if self.has_g else np.zeros(0)
        hbar = transform_inequality(pb.h(x, u, p, t), mu_h, c_h) if self.has_h else np.zeros(0)
        return g, hbar

    def path_weights(self, x, u, p, t, mult):
        mu_g, c_g, mu_h, c_h = mult
        g, hbar = self.path_residuals(x, u, p, t, mu_h, c_h)
        return mu_g + c_g * g, mu_h + c_h * hbar

    def lbar(self, x, u, p, t, mult):
        mu_g, c_g, mu_h, c_h = mult
        val = float(self.problem.l(x, u, p, t))
        if self.has_g or self.has_h:
            g, hbar = self.path_residuals(x, u, p, t, mu_h, c_h)
            val += float(mu_g @ g + 0.5 * (c_g * g) @ g)
            val += float(mu_h @ hbar + 0.5 * (c_h * hbar) @ hbar)
        return val

    def lbar_nodes(self, x, u, p, t, mult: MultiplierState):
        """``lbar`` at every grid node."""
        pb = self.problem
        val = np.asarray(pb.l_nodes(x, u, p, t), dtype=float)
        if self.has_g:
            G = pb.g_nodes(x, u, p, t)
            val = val + np.sum(mult.mu_g * G + 0.5 * mult.c_g * G * G, axis=1)
        if self.has_h:
            hb = np.maximum(pb.h_nodes(x, u, p, t), -mult.mu_h / mult.c_h)
            val = val + np.sum(mult.mu_h * hb + 0.5 * mult.c_h * hb * hb, axis=1)
        return val

    def static_parts(self, x, u, p, t, mult: MultiplierState, with_u=True):
        """Adjoint-independent parts of ``H_x`` and ``H_u`` at every node.

        ``H_x = Sx[k] + f_x^T lam`` and ``H_u = Su[k] + f_u^T lam``.
        """
        pb = self.problem
        Sx = np.array(pb.dldx_nodes(x, u, p, t), dtype=float)
        Su = np.array(pb.dldu_nodes(x, u, p, t), dtype=float) if with_u else None
        if self.has_g:
            Wg = mult.mu_g + mult.c_g * pb.g_nodes(x, u, p, t)
            Sx += pb.dgdx_mult_nodes(x, u, p, t, Wg)
            if with_u:
                Su += pb.dgdu_mult_nodes(x, u, p, t, Wg)
        if self.has_h:
            hb = np.maximum(pb.h_nodes(x, u, p, t), -mult.mu_h / mult.c_h)
            Wh = mult.mu_h + mult.c_h * hb
            Sx += pb.dhdx_mult_nodes(x, u, p, t, Wh)
            if with_u:
                Su += pb.dhdu_mult_nodes(x, u, p, t, Wh)
        return Sx, Su

    def hamiltonian(self, x, u, p, t, lam, mult):
        return self.lbar(x, u, p, t, mult) + float(lam @ self.problem.f(x, u, p, t))

    def H_x(self, x, u, p, t, lam, mult):
        pb = self.problem
        out = pb.dldx(x, u, p, t) + pb.dfdx_mult(x, u, p, t, lam)
        if self.has_g or self.has_h:
            wg, wh = self.path_weights(x, u, p, t, mult)
            if self.has_g:
                out = out + pb.dgdx_mult(x, u, p, t, wg)
            if self.has_h:
                out = out + pb.dhdx_mult(x, u, p, t, wh)
        return out

    def H_u(self, x, u, p, t, lam, mult):
        pb = self.problem
        out = pb.dldu(x, u, p, t) + pb.dfdu_mult(x, u, p, t, lam)
        if self.has_g or self.has_h:
            wg, wh = self.path_weights(x, u, p, t, mult)
            if self.has_g:
                out = out + pb.dgdu_mult(x, u, p, t, wg)
            if self.has_h:
                out = out + pb.dhdu_mult(x, u, p, t, wh)
        return out

    def H_p(self, x, u, p, t, lam, mult):
        pb = self.problem
        out = pb.dldp(x, u, p, t) + pb.dfdp_mult(x, u, p, t, lam)
        if self.has_g or self.has_h:
            wg, wh = self.path_weights(x, u, p, t, mult)
            if self.has_g:
                out = out + pb.dgdp_mult(x, u, p, t, wg)
            if self.has_h:
                out = out + pb.dhdp_mult(x, u, p, t, wh)
        return out

    # terminal ---------------------------------------------------------------
    def terminal_residuals(self, x, p, T, mult: MultiplierState):
        pb = self.problem
        gT = pb.gT(x, p, T) if self.has_gT else np.zeros(0)
        hbarT = transform_inequality(pb.hT(x, p, T), mult.mu_hT, mult.c_hT) if self.has_hT else np.zeros(0)
        return gT, hbarT

    def _terminal_weights(self, x, p, T, mult):
        gT, hbarT = self.terminal_residuals(x, p, T, mult)
        return mult.mu_gT + mult.c_gT * gT, mult.mu_hT + mult.c_hT * hbarT

    def Vbar(self, x, p, T, mult: MultiplierState):
        val = float(self.problem.V(x, p, T))
        if self.has_gT or self.has_hT:
            gT, hbarT = self.terminal_residuals(x, p, T, mult)
            val += float(mult.mu_gT @ gT + 0.5 * (mult.c_gT * gT) @ gT)
            val += float(mult.mu_hT @ hbarT + 0.5 * (mult.c_hT * hbarT) @ hbarT)
        return val

    # V-bar_x = V_x + gT_x^T (mu_gT + c_gT gT) + hT_x^T (mu_hT + c_hT hbarT); same pattern for p and T.
    def Vbar_x(self, x, p, T, mult):
        pb = self.problem
        out = np.asarray(pb.dVdx(x, p, T), dtype=float)
        if self.has_gT or self.has_hT:
            wg, wh = self._terminal_weights(x, p, T, mult)
            if self.has_gT:
                out = out + pb.dgTdx_mult(x, p, T, wg)
            if self.has_hT:
                out = out + pb.dhTdx_mult(x, p, T, wh)
        return out

    def Vbar_p(self, x, p, T, mult):
        pb = self.problem
        out = np.asarray(pb.dVdp(x, p, T), dtype=float)
        if self.has_gT or self.has_hT:
            wg, wh = self._terminal_weights(x, p, T, mult)
            if self.has_gT:
                out = out + pb.dgTdp_mult(x, p, T, wg)
            if self.has_hT:
                out = out + pb.dhTdp_mult(x, p, T, wh)
        return out

    def Vbar_T(self, x, p, T, mult):
        pb = self.problem
        out = float(pb.dVdT(x, p, T))
        if self.has_gT or self.has_hT:
            wg, wh = self._terminal_weights(x, p, T, mult)
            if self.has_gT:
                out += float(pb.dgTdT_mult(x, p, T, wg))
            if self.has_hT:
                out += float(pb.dhTdT_mult(x, p, T, wh))
        return out
