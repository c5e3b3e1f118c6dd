"""Method II: parameter-dependent condensed QP from first-order matrix powers.

With ``S(theta) ~ S + theta dS`` for every prediction block, the tracking
cost becomes ``1/2 U'H(theta)U + f(w, theta)'U + c(w, theta)`` where the
affine data vector is ``w = [x0; d; ref_window]`` and::

    H(theta) = H0 + theta dH (+ theta^2 dH2)
    f(theta) = (F0 + theta dF (+ theta^2 dF2)) w

Two online variants are provided: ``ni`` solves the truncated QP directly;
``inv`` replaces ``H(theta)^-1`` by the two-term expansion
``H0^-1 - theta H0^-1 dH H0^-1`` inside the active-set solve.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import qp as qpmod
from .condense import CondensedSystem
from .model import ParametricModel
from .qp import QpError
from .tracking import TrackingWeights, input_box_rows, state_box_rows

VARIANTS = ("inv", "ni")
NEUMANN_WARN = 0.5


class ExpansionWarning(UserWarning):
    """The first-order inverse expansion is outside its reliable range."""


def _sym(a):
    return 0.5 * (a + a.T)


@dataclass(frozen=True)
class ParametricQpCost:
    h0: np.ndarray
    dh: np.ndarray
    dh2: np.ndarray
    f0_map: np.ndarray
    df_map: np.ndarray
    df2_map: np.ndarray
    c0: np.ndarray
    dc: np.ndarray
    dc2: np.ndarray
    order: int
    n: int
    r: int
    n_ref: int
    m: int
    horizon: int

    def w(self, x0, d=None, ref_window=None) -> np.ndarray:
        x0 = np.asarray(x0, dtype=float).reshape(self.n)
        d = np.zeros(self.r) if d is None or self.r == 0 else np.asarray(d, dtype=float).reshape(self.r)
        ref = np.zeros(self.n_ref) if ref_window is None else np.asarray(ref_window, dtype=float).reshape(-1)
        return np.concatenate([x0, d, ref])

    def hessian(self, theta: float) -> np.ndarray:
        h = self.h0 + theta * self.dh
        if self.order == 2:
            h = h + theta ** 2 * self.dh2
        return h

    def linear(self, w, theta: float) -> np.ndarray:
        f = (self.f0_map + theta * self.df_map) @ w
        if self.order == 2:
            f = f + theta ** 2 * (self.df2_map @ w)
        return f

    def constant(self, w, theta: float) -> float:
        c = self.c0 + theta * self.dc
        if self.order == 2:
            c = c + theta ** 2 * self.dc2
        return float(w @ c @ w)

    def objective(self, u_seq, w, theta: float) -> float:
        return float(0.5 * u_seq @ self.hessian(theta) @ u_seq
                     + self.linear(w, theta) @ u_seq + self.constant(w, theta))


def _offset_maps(cs: CondensedSystem, weights: TrackingWeights, p: int = 0):
    """Nominal and sensitivity maps from ``w`` to the free response minus reference."""
    base = np.hstack([cs.s_x, cs.s_d, -weights.ref_lift])
    delta = np.hstack([cs.delta_s_x[p], cs.delta_s_d[p], np.zeros_like(weights.ref_lift)])
    return base, delta


def build_parametric_cost(nominal: CondensedSystem, weights: TrackingWeights,
                          order: int = 1) -> ParametricQpCost:
    """Expand the condensed tracking cost in a scalar parameter.

    ``order=1`` drops the quadratic-in-theta terms; ``order=2`` keeps them,
    which reproduces exactly the cost built from ``S + theta dS``.
    """
    if order not in (1, 2):
        raise ValueError("truncation order must be 1 or 2")
    if not nominal.has_sensitivities:
        raise ValueError("condensed system has no sensitivities")
    if len(nominal.delta_s_u) != 1:
        raise ValueError("Method II supports a single scalar parameter")
    qb = weights.q_bar
    su, dsu = nominal.s_u, nominal.delta_s_u[0]
    pw, dpw = _offset_maps(nominal, weights)
    return ParametricQpCost(
        h0=_sym(2.0 * (su.T @ qb @ su + weights.r_bar)),
        dh=_sym(2.0 * (su.T @ qb @ dsu + dsu.T @ qb @ su)),
        dh2=_sym(2.0 * dsu.T @ qb @ dsu),
        f0_map=2.0 * su.T @ qb @ pw,
        df_map=2.0 * (su.T @ qb @ dpw + dsu.T @ qb @ pw),
        df2_map=2.0 * dsu.T @ qb @ dpw,
        c0=_sym(pw.T @ qb @ pw),
        dc=_sym(pw.T @ qb @ dpw + dpw.T @ qb @ pw),
        dc2=_sym(dpw.T @ qb @ dpw),
        order=order,
        n=nominal.n,
        r=nominal.s_d.shape[1],
        n_ref=weights.ref_lift.shape[1],
        m=nominal.m,
        horizon=nominal.horizon,
    )


def neumann_norm(h0, dh, theta: float) -> float:
    """Spectral norm of ``theta H0^-1 dH``; the expansion needs it well below 1."""
    return float(np.linalg.norm(theta * np.linalg.solve(h0, dh), 2))


def approx_inverse(h0, dh, theta: float) -> np.ndarray:
    """Two-term expansion ``H0^-1 - theta H0^-1 dH H0^-1`` of ``(H0 + theta dH)^-1``.

    Warns with :class:`ExpansionWarning` when ``||theta H0^-1 dH|| >= 0.5``.
    """
    cf = cho_factor(h0)
    h0_inv = cho_solve(cf, np.eye(h0.shape[0]))
    out = h0_inv - theta * h0_inv @ dh @ h0_inv
    if theta != 0.0:
        nn = neumann_norm(h0, dh, theta)
        if nn >= NEUMANN_WARN:
            warnings.warn(f"inverse expansion unreliable: ||theta H0^-1 dH|| = {nn:.3g}",
                          ExpansionWarning, stacklevel=2)
    return _sym(out)


def explicit_optimizer_unconstrained(cost: ParametricQpCost, x0, theta: float,
                                     d=None, ref_window=None) -> np.ndarray:
    """First-order explicit optimizer ``U0 - theta H0^-1 (dH U0 + df)``.

    ``U0 = -H0^-1 f0`` is the nominal unconstrained solution; the slope is
    the exact derivative of ``-H(theta)^-1 f(theta)`` at zero.
    """
    w = cost.w(x0, d, ref_window)
    cf = cho_factor(cost.h0)
    u0 = -cho_solve(cf, cost.f0_map @ w)
    slope = -cho_solve(cf, cost.dh @ u0 + cost.df_map @ w)
    return u0 + theta * slope


@dataclass(frozen=True)
class ParametricConstraints:
    """``(G0 + theta dG) U <= b + (E0 + theta dE) w``."""

    g0: np.ndarray
    dg: np.ndarray
    b: np.ndarray
    e0: np.ndarray
    de: np.ndarray

    def at(self, theta: float, w):
        g = self.g0 + theta * self.dg
        rhs = self.b + (self.e0 + theta * self.de) @ w
        return g, rhs


def build_method2_constraints(model: ParametricModel, nominal: CondensedSystem,
                              n_ref: int, state_constraints: bool = False) -> ParametricConstraints:
    N = nominal.horizon
    g, b = input_box_rows(model, N)
    n_w = model.n + model.r + n_ref
    e = np.zeros((len(b), n_w))
    dg = np.zeros_like(g)
    de = np.zeros_like(e)
    if state_constraints:
        fx, bx = state_box_rows(model, N)
        free = np.hstack([nominal.s_x, nominal.s_d, np.zeros((nominal.s_x.shape[0], n_ref))])
        dfree = np.hstack([nominal.delta_s_x[0], nominal.delta_s_d[0],
                           np.zeros((nominal.s_x.shape[0], n_ref))])
        g = np.vstack([g, fx @ nominal.s_u])
        dg = np.vstack([dg, fx @ nominal.delta_s_u[0]])
        b = np.concatenate([b, bx])
        e = np.vstack([e, -fx @ free])
        de = np.vstack([de, -fx @ dfree])
    return ParametricConstraints(g, dg, b, e, de)


@dataclass
class ControllerState:
    """Mutable per-closed-loop memory for the previous-solution fallback."""

    last_solution: tuple = None
    last_input: np.ndarray = None
    fallback_count: int = 0
    fallback_steps: list = field(default_factory=list)


def method2_factor(cost: ParametricQpCost, theta: float, variant: str):
    """Inverse-Hessian factor ``J`` (``J J' ~ H(theta)^-1``) or None if unusable."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown Method II variant {variant!r}")
    if variant == "ni":
        try:
            lower, _ = qpmod.factor_hessian(cost.hessian(theta))
        except np.linalg.LinAlgError:
            return None
        return qpmod.inverse_factor(lower)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ExpansionWarning)
        m_inv = approx_inverse(cost.h0, cost.dh, theta)
    return qpmod.safe_cholesky(m_inv)


def solve_method2(cost: ParametricQpCost, constraints: ParametricConstraints, x0, theta: float,
                  state: ControllerState, variant: str = "inv", d=None, ref_window=None,
                  factor=None, step: int = None) -> np.ndarray:
    """First input of the Method II QP, with previous-solution fallback.

    On an infeasible or failed solve the previously returned input is
    returned again and ``state.fallback_count`` is incremented. Failure
    before any successful solve raises :class:`QpError`.
    """
    w = cost.w(x0, d, ref_window)
    j = method2_factor(cost, theta, variant) if factor is None else factor
    sol = None
    if j is not None:
        g, rhs = constraints.at(theta, w)
        sol = qpmod.solve_factored(j, cost.linear(w, theta), g, rhs)
    if sol is None or not sol.ok:
        if state.last_input is None:
            reason = "factorization failed" if sol is None else sol.status.value
            raise QpError(f"Method II ({variant}) failed with no previous solution: {reason}", sol)
        state.fallback_count += 1
        if step is not None:
            state.fallback_steps.append(step)
        return state.last_input.copy()
    u_seq = sol.z_opt
    u0 = u_seq[:cost.m].copy()
    state.last_solution = (u_seq.copy(), sol.active_set)
    state.last_input = u0
    return u0.copy()


def method2_mpqp(cost: ParametricQpCost, constraints: ParametricConstraints, theta: float,
                 state_box, d=None, ref_window=None):
    """Truncated Method II QP at fixed ``theta`` as an mpQP in ``x0``.

    Disturbance and reference are folded into the offsets. Returns
    ``(h, f_map, f_off, g, b, e_mat, box)``.
    """
    n = cost.n
    rest = cost.w(np.zeros(n), d, ref_window)[n:]
    f_full = cost.f0_map + theta * cost.df_map
    if cost.order == 2:
        f_full = f_full + theta ** 2 * cost.df2_map
    e_full = constraints.e0 + theta * constraints.de
    g = constraints.g0 + theta * constraints.dg
    return (cost.hessian(theta), f_full[:, :n], f_full[:, n:] @ rest, g,
            constraints.b + e_full[:, n:] @ rest, e_full[:, :n], np.asarray(state_box, dtype=float))
