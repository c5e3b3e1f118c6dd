"""Tracking cost weights and stacked box constraints shared by all controllers.

The stage cost is ``(x_k - xr_k)' Q (x_k - xr_k) + u_k' R u_k`` summed over
the horizon. The state reference ``xr_k`` is lifted from the output
reference through the pseudo-inverse of ``C``. Two weighting conventions:

``output``
    ``Q = q_scale * C' C``: only the tracked output channel is weighted.
``state``
    ``Q = q_scale * I``: full state deviation, with unreferenced states
    pulled towards zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .condense import CondensedSystem
from .model import ParametricModel
from .qp import DenseQp

CONVENTIONS = ("output", "state")


@dataclass(frozen=True)
class TrackingWeights:
    q_bar: np.ndarray     # (N n, N n)
    r_bar: np.ndarray     # (N m, N m)
    ref_lift: np.ndarray  # (N n, N q): X_ref = ref_lift @ ref_window
    horizon: int

    def lift(self, ref_window) -> np.ndarray:
        return self.ref_lift @ np.asarray(ref_window, dtype=float).reshape(-1)


def tracking_weights(model: ParametricModel, N: int, q_scale: float, r_scale: float,
                     convention: str = "output") -> TrackingWeights:
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown weighting convention {convention!r}")
    if N < 1:
        raise ValueError("horizon must be at least 1")
    if convention == "output":
        q = q_scale * model.c.T @ model.c
    else:
        q = q_scale * np.eye(model.n)
    r = r_scale * np.eye(model.m)
    eye = np.eye(N)
    return TrackingWeights(
        q_bar=np.kron(eye, q),
        r_bar=np.kron(eye, r),
        ref_lift=np.kron(eye, np.linalg.pinv(model.c)),
        horizon=N,
    )


def input_box_rows(model: ParametricModel, N: int):
    """``F_U U <= f_U`` for the input box repeated over the horizon."""
    m = model.m
    eye = np.eye(N * m)
    lo = np.tile(model.input_box[:, 0], N)
    hi = np.tile(model.input_box[:, 1], N)
    return np.vstack([eye, -eye]), np.concatenate([hi, -lo])


def state_box_rows(model: ParametricModel, N: int):
    """``F_X X <= f_X`` for the state box on x_1..x_N."""
    n = model.n
    eye = np.eye(N * n)
    lo = np.tile(model.state_box[:, 0], N)
    hi = np.tile(model.state_box[:, 1], N)
    return np.vstack([eye, -eye]), np.concatenate([hi, -lo])


def condensed_hessian(s_u, weights: TrackingWeights) -> np.ndarray:
    return 2.0 * (s_u.T @ weights.q_bar @ s_u + weights.r_bar)


def condensed_qp(cs: CondensedSystem, weights: TrackingWeights, model: ParametricModel,
                 x0, ref_window, state_constraints: bool = False) -> DenseQp:
    """Condensed tracking QP for fixed prediction matrices."""
    free = cs.s_x @ x0
    if cs.s_d.shape[1]:
        free = free + cs.s_d @ model.disturbance
    err0 = free - weights.lift(ref_window)
    h = condensed_hessian(cs.s_u, weights)
    f = 2.0 * cs.s_u.T @ weights.q_bar @ err0
    g, rhs = input_box_rows(model, cs.horizon)
    if state_constraints:
        fx, bx = state_box_rows(model, cs.horizon)
        g = np.vstack([g, fx @ cs.s_u])
        rhs = np.concatenate([rhs, bx - fx @ free])
    return DenseQp(h, f, g, rhs)


def condensed_mpqp(cs: CondensedSystem, weights: TrackingWeights, model: ParametricModel,
                   ref_window=None, state_constraints: bool = False):
    """Condensed tracking QP as an mpQP in ``x0`` with the reference held fixed.

    Returns ``(h, f_map, f_off, g, b, e_mat, box)``; the box is the state box.
    """
    N = cs.horizon
    ref = np.zeros((N, model.q)) if ref_window is None else ref_window
    offset = -weights.lift(ref)
    if cs.s_d.shape[1]:
        offset = offset + cs.s_d @ model.disturbance
    qs = 2.0 * cs.s_u.T @ weights.q_bar
    g, b = input_box_rows(model, N)
    e = np.zeros((len(b), model.n))
    if state_constraints:
        fx, bx = state_box_rows(model, N)
        free_off = cs.s_d @ model.disturbance if cs.s_d.shape[1] else np.zeros(N * model.n)
        g = np.vstack([g, fx @ cs.s_u])
        b = np.concatenate([b, bx - fx @ free_off])
        e = np.vstack([e, -fx @ cs.s_x])
    return (condensed_hessian(cs.s_u, weights), qs @ cs.s_x, qs @ offset, g, b, e,
            model.state_box.copy())
