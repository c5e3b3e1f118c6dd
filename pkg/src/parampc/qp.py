"""Dense strictly convex QP: ``min 1/2 z'Hz + f'z  s.t.  G z <= rhs``.

Solved with a dual active-set iteration (compiled kernel when available).
The working set at termination is reported together with the multipliers,
which the region enumerator relies on.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from . import _backend

log = logging.getLogger(__name__)

REG_SCALE = 1e-8
_SINGULAR_PIVOT = 1e-13


class QpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    MAX_ITERATIONS = "max-iterations"


_STATUS = {0: QpStatus.OPTIMAL, 1: QpStatus.INFEASIBLE, 2: QpStatus.MAX_ITERATIONS}


class QpError(RuntimeError):
    """Raised when a QP that must be solved is not."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution

    @property
    def certificate(self):
        return None if self.solution is None else self.solution.certificate


@dataclass
class DenseQp:
    h: np.ndarray
    f: np.ndarray
    g: np.ndarray = None
    rhs: np.ndarray = None

    def __post_init__(self):
        h = np.array(self.h, dtype=float)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise ValueError("Hessian must be square")
        self.h = 0.5 * (h + h.T)
        nz = h.shape[0]
        self.f = np.asarray(self.f, dtype=float).reshape(nz)
        self.g = np.zeros((0, nz)) if self.g is None else np.asarray(self.g, dtype=float).reshape(-1, nz)
        self.rhs = np.zeros(0) if self.rhs is None else np.asarray(self.rhs, dtype=float).reshape(-1)
        if self.g.shape[0] != self.rhs.shape[0]:
            raise ValueError(
                f"constraint matrix has {self.g.shape[0]} rows, rhs has {self.rhs.shape[0]}")

    @property
    def nz(self) -> int:
        return self.h.shape[0]

    @property
    def nc(self) -> int:
        return self.g.shape[0]

    def objective(self, z) -> float:
        return float(0.5 * z @ self.h @ z + self.f @ z)


@dataclass
class QpSolution:
    z_opt: np.ndarray
    active_set: tuple
    multipliers: np.ndarray
    status: QpStatus
    iterations: int = 0
    certificate: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def ok(self) -> bool:
        return self.status is QpStatus.OPTIMAL


def regularize(h, eps_reg: float) -> np.ndarray:
    """``h + eps_reg * I``."""
    h = np.asarray(h, dtype=float)
    return h + eps_reg * np.eye(h.shape[0])


def default_eps(h) -> float:
    h = np.asarray(h, dtype=float)
    return REG_SCALE * max(np.trace(h), 1e-300) / h.shape[0]


def safe_cholesky(h):
    """Lower Cholesky factor or ``None`` if ``h`` is not numerically PD.

    A factor with a pivot ratio below ~1e-13 counts as a failure so that
    singular PSD matrices which happen to factor under rounding are caught.
    """
    try:
        lower = np.linalg.cholesky(h)
    except np.linalg.LinAlgError:
        return None
    piv = np.abs(np.diag(lower)) ** 2
    if piv.size and (not np.all(np.isfinite(piv)) or piv.min() <= _SINGULAR_PIVOT * piv.max()):
        return None
    return lower


def factor_hessian(h, eps_reg=None):
    """Return ``(L, h_used)`` with ``h_used = L L'``.

    Regularizes with ``eps_reg`` (default scale-aware) only when the plain
    factorization fails.
    """
    h = 0.5 * (np.asarray(h, dtype=float) + np.asarray(h, dtype=float).T)
    lower = safe_cholesky(h)
    if lower is not None:
        return lower, h
    eps = default_eps(h) if eps_reg is None else eps_reg
    h_reg = regularize(h, eps)
    lower = safe_cholesky(h_reg)
    if lower is None:
        raise np.linalg.LinAlgError("Hessian is not positive definite after regularization")
    log.debug("regularized Hessian with eps=%g", eps)
    return lower, h_reg


def inverse_factor(lower) -> np.ndarray:
    """``J = L^-T`` so that ``J J' = (L L')^-1``."""
    return solve_triangular(lower, np.eye(lower.shape[0]), lower=True).T


def max_iterations(nz: int, nc: int) -> int:
    return 50 * (nz + nc)


def solve_factored(j, f, g, rhs, max_iter=None) -> QpSolution:
    """Solve using a precomputed inverse-Hessian factor ``J`` (``J J' = H^-1``)."""
    f = np.asarray(f, dtype=float)
    nz = f.shape[0]
    g = np.zeros((0, nz)) if g is None else np.asarray(g, dtype=float).reshape(-1, nz)
    rhs = np.zeros(0) if rhs is None else np.asarray(rhs, dtype=float).reshape(-1)
    if max_iter is None:
        max_iter = max_iterations(nz, g.shape[0])
    status, z, lam, active, iters, cert = _backend.dual_active_set(j, f, g, rhs, max_iter)
    return QpSolution(
        z_opt=np.asarray(z),
        active_set=tuple(sorted(active)),
        multipliers=np.asarray(lam),
        status=_STATUS[status],
        iterations=iters,
        certificate=np.asarray(cert),
    )


def solve(qp: DenseQp, eps_reg=None) -> QpSolution:
    """Solve a dense QP; deterministic for identical inputs."""
    lower, h_used = factor_hessian(qp.h, eps_reg)
    if h_used is not qp.h and not np.array_equal(h_used, qp.h):
        qp.h = h_used
    return solve_factored(inverse_factor(lower), qp.f, qp.g, qp.rhs)


def kkt_residual(qp: DenseQp, sol: QpSolution) -> float:
    """Max of stationarity, primal/dual feasibility and complementarity residuals."""
    z, lam = sol.z_opt, sol.multipliers
    stat = np.abs(qp.h @ z + qp.f + qp.g.T @ lam).max() if qp.nz else 0.0
    if qp.nc == 0:
        return float(stat)
    slack = qp.g @ z - qp.rhs
    feas = max(0.0, slack.max())
    dual = max(0.0, -lam.min())
    comp = np.abs(lam * slack).max()
    return float(max(stat, feas, dual, comp))
