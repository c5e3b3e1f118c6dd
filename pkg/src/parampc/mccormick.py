"""Method I: lifted first-order prediction model with McCormick envelopes.

The prediction is linearized in the parameters around the base matrix::

    X ~ S_x x0 + S_u U + sum_p S_{p,x0} chi_p + sum_p S_{p,u} V_p + S_d d + sum_p theta_p dS_{d,p} d

with auxiliary parameters ``chi_p = theta_p x0`` and auxiliary inputs
``V_p = theta_p U``. The bilinear equalities ``V_p = theta_p U`` are relaxed
by their McCormick envelopes, giving a QP in ``z = [U; V_1; ...]`` whose
linear term and right-hand side are affine in the augmented parameter::

    xi = [x0; chi_1; ...; chi_P; theta_1..theta_P; ref_window]

Raw ``theta`` is part of ``xi`` because the envelope rows depend on it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import qp as qpmod
from .condense import CondensedSystem, condense_model
from .model import ParametricModel
from .qp import QpError, QpSolution
from .tracking import TrackingWeights, input_box_rows, state_box_rows


def build_lifted_sensitivities(cond: CondensedSystem, model: ParametricModel):
    """Per-parameter ``(S_{p,x0}, S_{p,u})`` of the lifted model.

    ``cond`` must carry sensitivities at the base matrix; block ``i`` of
    ``S_{p,x0}`` is the Frechet derivative of ``A^i`` and block ``(i, j)`` of
    ``S_{p,u}`` is ``L(dA_p, i-1-j) B``.
    """
    if not cond.has_sensitivities:
        raise ValueError("condensed system has no sensitivities")
    if len(cond.delta_s_x) != model.n_theta:
        raise ValueError("sensitivity count does not match the model's parameters")
    return [(cond.delta_s_x[p], cond.delta_s_u[p]) for p in range(model.n_theta)]


@dataclass(frozen=True)
class McCormickBlock:
    """Rows ``g_u U + g_v V <= b + e_theta * theta`` for one parameter."""

    g_u: np.ndarray
    g_v: np.ndarray
    b: np.ndarray
    e_theta: np.ndarray


def mccormick_rows(theta_bounds, u_bounds, N: int) -> McCormickBlock:
    """Envelope of ``v_k = theta * u_k`` over the horizon.

    ``u_bounds`` holds one ``(lo, hi)`` pair per input; rows are ordered by
    step, then input, then the four envelope inequalities.
    """
    t_lo, t_hi = (float(v) for v in theta_bounds)
    u_bounds = np.asarray(u_bounds, dtype=float).reshape(-1, 2)
    if not (np.all(np.isfinite(u_bounds)) and np.isfinite(t_lo) and np.isfinite(t_hi)):
        raise ValueError("McCormick envelopes need bounded intervals")
    if t_lo > t_hi or np.any(u_bounds[:, 0] > u_bounds[:, 1]):
        raise ValueError("interval with lower > upper")
    m = u_bounds.shape[0]
    nv = N * m
    g_u = np.zeros((4 * nv, nv))
    g_v = np.zeros((4 * nv, nv))
    b = np.zeros(4 * nv)
    e = np.zeros(4 * nv)
    for j in range(nv):
        u_lo, u_hi = u_bounds[j % m]
        r = 4 * j
        # v >= t_lo u + theta u_lo - t_lo u_lo
        g_u[r, j], g_v[r, j], b[r], e[r] = t_lo, -1.0, t_lo * u_lo, -u_lo
        # v >= t_hi u + theta u_hi - t_hi u_hi
        g_u[r + 1, j], g_v[r + 1, j], b[r + 1], e[r + 1] = t_hi, -1.0, t_hi * u_hi, -u_hi
        # v <= t_hi u + theta u_lo - t_hi u_lo
        g_u[r + 2, j], g_v[r + 2, j], b[r + 2], e[r + 2] = -t_hi, 1.0, -t_hi * u_lo, u_lo
        # v <= t_lo u + theta u_hi - t_lo u_hi
        g_u[r + 3, j], g_v[r + 3, j], b[r + 3], e[r + 3] = -t_lo, 1.0, -t_lo * u_hi, u_hi
    return McCormickBlock(g_u, g_v, b, e)


def envelope_interval(theta, u, theta_bounds, u_bounds):
    """Interval of ``v`` admitted by the four envelope rows at ``(theta, u)``."""
    t_lo, t_hi = theta_bounds
    u_lo, u_hi = u_bounds
    lower = max(t_lo * u + theta * u_lo - t_lo * u_lo, t_hi * u + theta * u_hi - t_hi * u_hi)
    upper = min(t_hi * u + theta * u_lo - t_hi * u_lo, t_lo * u + theta * u_hi - t_lo * u_hi)
    return lower, upper


@dataclass(frozen=True)
class AugmentedQp:
    """Method I QP ``min 1/2 z'Hz + (F xi + f0)'z  s.t.  G z <= b + E xi``."""

    h: np.ndarray
    f_map: np.ndarray
    f_off: np.ndarray
    g: np.ndarray
    b: np.ndarray
    e_mat: np.ndarray
    phi: np.ndarray
    gamma: np.ndarray
    n_u_block: int
    horizon: int
    n: int
    n_theta: int
    n_ref: int
    j_factor: np.ndarray
    reg_eps: float
    param_box: np.ndarray

    @property
    def n_xi(self) -> int:
        return self.n * (1 + self.n_theta) + self.n_theta + self.n_ref

    @property
    def selector(self) -> np.ndarray:
        s = np.zeros((self.n_u_block, self.h.shape[0]))
        s[:, :self.n_u_block] = np.eye(self.n_u_block)
        return s

    def xi(self, x0, theta, ref_window=None) -> np.ndarray:
        x0 = np.asarray(x0, dtype=float).reshape(self.n)
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        ref = np.zeros(self.n_ref) if ref_window is None else np.asarray(ref_window, dtype=float).reshape(-1)
        chi = [t * x0 for t in theta]
        return np.concatenate([x0, *chi, theta, ref])

    def f(self, xi) -> np.ndarray:
        return self.f_map @ xi + self.f_off

    def rhs(self, xi) -> np.ndarray:
        return self.b + self.e_mat @ xi

    def mpqp(self, ref_window=None):
        """mpQP data over ``[x0; chi; theta]`` with the reference held fixed.

        Returns ``(h, f_map, f_off, g, b, e_mat, box)``.
        """
        k = self.n_xi - self.n_ref
        ref = np.zeros(self.n_ref) if ref_window is None else np.asarray(ref_window, dtype=float).reshape(-1)
        f_off = self.f_off + self.f_map[:, k:] @ ref
        b = self.b + self.e_mat[:, k:] @ ref
        return self.h, self.f_map[:, :k], f_off, self.g, b, self.e_mat[:, :k], self.param_box


def _chi_box(theta_box, state_box):
    out = []
    for t_lo, t_hi in theta_box:
        for x_lo, x_hi in state_box:
            corners = [t_lo * x_lo, t_lo * x_hi, t_hi * x_lo, t_hi * x_hi]
            out.append((min(corners), max(corners)))
    return out


def build_method1_qp(model: ParametricModel, N: int, weights: TrackingWeights,
                     state_constraints: bool = False, eps_reg=None) -> AugmentedQp:
    """Assemble the Method I augmented QP at the base matrix of ``model``."""
    if weights.horizon != N:
        raise ValueError("weights were built for a different horizon")
    cs = condense_model(model, N, sensitivities=True)
    sens = build_lifted_sensitivities(cs, model)
    n, m, P = model.n, model.m, model.n_theta
    nu = N * m
    n_ref = N * model.q
    nxi = n * (1 + P) + P + n_ref
    dist = model.disturbance

    gamma = np.hstack([cs.s_u] + [s_pu for _, s_pu in sens])
    phi = np.zeros((N * n, nxi))
    phi[:, :n] = cs.s_x
    for p, (s_px, _) in enumerate(sens):
        phi[:, n * (1 + p):n * (2 + p)] = s_px
        if model.r:
            phi[:, n * (1 + P) + p] = cs.delta_s_d[p] @ dist
    s0 = cs.s_d @ dist if model.r else np.zeros(N * n)
    track = np.zeros((N * n, nxi))
    track[:, nxi - n_ref:] = weights.ref_lift

    nz = gamma.shape[1]
    sel = np.zeros((nu, nz))
    sel[:, :nu] = np.eye(nu)
    qb = weights.q_bar
    h = 2.0 * (gamma.T @ qb @ gamma + sel.T @ weights.r_bar @ sel)
    h = 0.5 * (h + h.T)
    f_map = 2.0 * gamma.T @ qb @ (phi - track)
    f_off = 2.0 * gamma.T @ qb @ s0

    # regularize only the auxiliary block; the input block is already PD via R
    reg = 0.0
    lower = qpmod.safe_cholesky(h)
    if lower is None:
        reg = qpmod.default_eps(h) if eps_reg is None else eps_reg
        h = h.copy()
        idx = np.arange(nu, nz)
        h[idx, idx] += reg
        lower = qpmod.safe_cholesky(h)
        if lower is None:
            raise np.linalg.LinAlgError("Method I Hessian not PD after regularization")

    g_rows, b_rows, e_rows = [], [], []
    f_u, b_u = input_box_rows(model, N)
    g_rows.append(f_u @ sel)
    b_rows.append(b_u)
    e_rows.append(np.zeros((len(b_u), nxi)))

    for p in range(P):
        blk = mccormick_rows(model.theta_box[p], model.input_box, N)
        gp = np.zeros((blk.b.size, nz))
        gp[:, :nu] = blk.g_u
        gp[:, nu * (1 + p):nu * (2 + p)] = blk.g_v
        ep = np.zeros((blk.b.size, nxi))
        ep[:, n * (1 + P) + p] = blk.e_theta
        g_rows.append(gp)
        b_rows.append(blk.b)
        e_rows.append(ep)
        # implied bounds on V_p
        t_lo, t_hi = model.theta_box[p]
        v_lo, v_hi = [], []
        for j in range(nu):
            u_lo, u_hi = model.input_box[j % m]
            corners = [t_lo * u_lo, t_lo * u_hi, t_hi * u_lo, t_hi * u_hi]
            v_lo.append(min(corners))
            v_hi.append(max(corners))
        gv = np.zeros((2 * nu, nz))
        gv[:nu, nu * (1 + p):nu * (2 + p)] = np.eye(nu)
        gv[nu:, nu * (1 + p):nu * (2 + p)] = -np.eye(nu)
        g_rows.append(gv)
        b_rows.append(np.concatenate([v_hi, -np.asarray(v_lo)]))
        e_rows.append(np.zeros((2 * nu, nxi)))

    if state_constraints:
        fx, bx = state_box_rows(model, N)
        g_rows.append(fx @ gamma)
        b_rows.append(bx - fx @ s0)
        e_rows.append(-fx @ phi)

    box = [tuple(iv) for iv in model.state_box]
    box += _chi_box(model.theta_box, model.state_box)
    box += [tuple(iv) for iv in model.theta_box]

    return AugmentedQp(
        h=h, f_map=f_map, f_off=f_off,
        g=np.vstack(g_rows), b=np.concatenate(b_rows), e_mat=np.vstack(e_rows),
        phi=phi, gamma=gamma, n_u_block=nu, horizon=N, n=n, n_theta=P, n_ref=n_ref,
        j_factor=qpmod.inverse_factor(lower), reg_eps=reg,
        param_box=np.array(box, dtype=float),
    )


def solve_method1(aqp: AugmentedQp, x0, theta, ref_window=None):
    """Solve the augmented QP at ``(x0, theta)``.

    Returns ``(u0, U, solution)``; raises :class:`QpError` when the QP is
    infeasible or the iteration cap is hit.
    """
    xi = aqp.xi(x0, theta, ref_window)
    sol: QpSolution = qpmod.solve_factored(aqp.j_factor, aqp.f(xi), aqp.g, aqp.rhs(xi))
    if not sol.ok:
        raise QpError(f"Method I QP {sol.status.value}", sol)
    m = aqp.n_u_block // aqp.horizon
    u_seq = sol.z_opt[:aqp.n_u_block]
    return u_seq[:m].copy(), u_seq.copy(), sol
