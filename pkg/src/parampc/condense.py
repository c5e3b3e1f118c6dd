"""Condensed (stacked) prediction matrices and their parameter sensitivities.

For ``x+ = A x + B u + E d`` over a horizon ``N``::

    X = S_x x0 + S_u U + S_d d,   X = [x_1; ...; x_N],  U = [u_0; ...; u_{N-1}]

with ``[S_x]_k = A^k``, ``[S_u]_{k,i} = A^(k-1-i) B`` (i < k) and
``[S_d]_k = sum_{i<k} A^i E``. Sensitivities are first-order derivatives
with respect to a single parameter direction ``dA``, built from the Frechet
derivative of the matrix power map.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ParametricModel


@dataclass(frozen=True)
class CondensedSystem:
    """Stacked prediction matrices, optionally with per-parameter sensitivities.

    ``delta_s_x``, ``delta_s_u`` and ``delta_s_d`` are tuples with one entry
    per parameter component (empty when sensitivities were not requested).
    """

    horizon: int
    s_x: np.ndarray
    s_u: np.ndarray
    s_d: np.ndarray
    delta_s_x: tuple = ()
    delta_s_u: tuple = ()
    delta_s_d: tuple = ()

    @property
    def n(self) -> int:
        return self.s_x.shape[1]

    @property
    def m(self) -> int:
        return self.s_u.shape[1] // self.horizon

    @property
    def has_sensitivities(self) -> bool:
        return len(self.delta_s_u) > 0

    def predict(self, x0, u_seq, d=None) -> np.ndarray:
        out = self.s_x @ x0 + self.s_u @ u_seq
        if d is not None and self.s_d.shape[1]:
            out = out + self.s_d @ d
        return out


def matrix_powers(a, count: int) -> list:
    """``[A^0, A^1, ..., A^count]`` by repeated multiplication."""
    a = np.asarray(a, dtype=float)
    powers = [np.eye(a.shape[0])]
    for _ in range(count):
        powers.append(powers[-1] @ a)
    return powers


def frechet_power(a_tilde, delta_a, p: int) -> np.ndarray:
    """Frechet derivative of ``M -> M^p`` at ``a_tilde`` applied to ``delta_a``.

    ``sum_{r=0}^{p-1} a_tilde^r @ delta_a @ a_tilde^(p-1-r)``; zero for p = 0.
    """
    a_tilde = np.asarray(a_tilde, dtype=float)
    delta_a = np.asarray(delta_a, dtype=float)
    if a_tilde.ndim != 2 or a_tilde.shape[0] != a_tilde.shape[1]:
        raise ValueError("a_tilde must be square")
    if delta_a.shape != a_tilde.shape:
        raise ValueError(f"delta_a shape {delta_a.shape} != a_tilde shape {a_tilde.shape}")
    if p < 0:
        raise ValueError("power must be nonnegative")
    powers = matrix_powers(a_tilde, max(p - 1, 0))
    out = np.zeros_like(a_tilde)
    for r in range(p):
        out += powers[r] @ delta_a @ powers[p - 1 - r]
    return out


def _frechet_sequence(a_tilde, delta_a, count: int) -> list:
    # L_0 = 0, L_p = A L_{p-1} + dA A^{p-1}
    powers = matrix_powers(a_tilde, max(count - 1, 0))
    seq = [np.zeros_like(a_tilde)]
    for p in range(1, count + 1):
        seq.append(a_tilde @ seq[-1] + delta_a @ powers[p - 1])
    return seq


def _check_dims(a, b, e):
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if a.ndim != 2 or a.shape != (n, n):
        raise ValueError("A must be square")
    b = np.asarray(b, dtype=float).reshape(n, -1)
    e = np.asarray(e, dtype=float).reshape(n, -1) if np.size(e) else np.zeros((n, 0))
    return a, b, e


def _stack(blocks_x, b_blocks, e_blocks, n, m, r, N):
    s_x = np.vstack(blocks_x)
    s_u = np.zeros((N * n, N * m))
    s_d = np.zeros((N * n, r))
    for k in range(1, N + 1):
        rows = slice((k - 1) * n, k * n)
        for i in range(k):
            s_u[rows, i * m:(i + 1) * m] = b_blocks[k - 1 - i]
        if r:
            s_d[rows] = e_blocks[k]
    return s_x, s_u, s_d


def condense_exact(a, b, e, N: int) -> CondensedSystem:
    """Exact stacked matrices for fixed ``A``, ``B``, ``E``."""
    if N < 1:
        raise ValueError("horizon must be at least 1")
    a, b, e = _check_dims(a, b, e)
    n, m, r = a.shape[0], b.shape[1], e.shape[1]
    powers = matrix_powers(a, N)
    b_blocks = [pw @ b for pw in powers[:N]]
    # e_blocks[k] = sum_{i<k} A^i E
    e_blocks = [np.zeros((n, r))]
    for k in range(1, N + 1):
        e_blocks.append(e_blocks[-1] + powers[k - 1] @ e)
    s_x, s_u, s_d = _stack(powers[1:], b_blocks, e_blocks, n, m, r, N)
    return CondensedSystem(N, s_x, s_u, s_d)


def condense_sensitivity(a_tilde, delta_a, b, e, N: int, shifted_indexing: bool = False):
    """First-order sensitivities ``(dS_x, dS_u, dS_d)`` along ``delta_a``.

    By default block ``k`` of ``dS_x`` is the derivative of ``A^k``. With
    ``shifted_indexing=True`` the first block is zero and block ``k`` uses
    power ``k - 1`` instead (the literal tabulation of the published method).
    """
    if N < 1:
        raise ValueError("horizon must be at least 1")
    a_tilde, b, e = _check_dims(a_tilde, b, e)
    delta_a = np.asarray(delta_a, dtype=float)
    if delta_a.shape != a_tilde.shape:
        raise ValueError(f"delta_a shape {delta_a.shape} != A shape {a_tilde.shape}")
    n, m, r = a_tilde.shape[0], b.shape[1], e.shape[1]
    lf = _frechet_sequence(a_tilde, delta_a, N)
    if shifted_indexing:
        x_blocks = [lf[k - 1] for k in range(1, N + 1)]
    else:
        x_blocks = lf[1:]
    b_blocks = [lf[p] @ b for p in range(N)]
    e_blocks = [np.zeros((n, r))]
    for k in range(1, N + 1):
        e_blocks.append(e_blocks[-1] + lf[k - 1] @ e)
    return _stack(x_blocks, b_blocks, e_blocks, n, m, r, N)


def condense_model(model: ParametricModel, N: int, theta=None,
                   sensitivities: bool = False,
                   shifted_indexing: bool = False) -> CondensedSystem:
    """Condense a parametric model at ``theta`` (the base matrix when None).

    With ``sensitivities=True`` the per-parameter first-order sensitivities
    at the same point are attached.
    """
    a = model.a.base if theta is None else model.a(theta)
    cs = condense_exact(a, model.b, model.e, N)
    if not sensitivities:
        return cs
    dx, du, dd = [], [], []
    for delta in model.a.deltas:
        sx, su, sd = condense_sensitivity(a, delta, model.b, model.e, N, shifted_indexing)
        dx.append(sx)
        du.append(su)
        dd.append(sd)
    return CondensedSystem(N, cs.s_x, cs.s_u, cs.s_d, tuple(dx), tuple(du), tuple(dd))
