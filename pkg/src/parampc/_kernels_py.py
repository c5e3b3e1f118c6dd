"""Pure-Python (numpy) reference implementation of the hot kernels.

Mirrors ``_kernels.pyx`` operation for operation so that either backend can
be selected at import time (see ``parampc._backend``).
"""
import numpy as np
from scipy.linalg import solve_triangular

OPTIMAL = 0
INFEASIBLE = 1
MAX_ITER = 2


def _orthogonalize(q1, dvec):
    """Project ``dvec`` onto the complement of span(q1) with one
    reorthogonalization pass. Returns (coefficients, residual)."""
    if q1.shape[1] == 0:
        return np.zeros(0), dvec.copy()
    c = q1.T @ dvec
    w = dvec - q1 @ c
    c2 = q1.T @ w
    w = w - q1 @ c2
    return c + c2, w


def _thin_qr(J, G, active):
    nz = J.shape[0]
    q = len(active)
    q1 = np.zeros((nz, q))
    r = np.zeros((q, q))
    for j, idx in enumerate(active):
        dvec = -(J.T @ G[idx])
        c, w = _orthogonalize(q1[:, :j], dvec)
        r[:j, j] = c
        nrm = np.sqrt(w @ w)
        r[j, j] = nrm
        q1[:, j] = w / nrm
    return q1, r


WEAK_TOL = 1e-9


def dual_active_set(J, f, G, rhs, max_iter, tol=1e-12):
    """Dual active-set QP iteration on min 1/2 z'Hz + f'z s.t. G z <= rhs.

    ``J`` is any square factor with ``J @ J.T == inv(H)``. Entering
    constraints are picked by lowest index among violated rows, leaving
    constraints by the minimum ratio with ties to the lowest index.

    Returns
    -------
    status, z, lam, active, iterations, certificate
    """
    J = np.ascontiguousarray(J, dtype=float)
    f = np.ascontiguousarray(f, dtype=float)
    G = np.ascontiguousarray(G, dtype=float)
    rhs = np.ascontiguousarray(rhs, dtype=float)
    nz = f.shape[0]
    nc = rhs.shape[0]

    z = -(J @ (J.T @ f))
    active = []
    u = np.zeros(0)
    q1 = np.zeros((nz, 0))
    r_mat = np.zeros((0, 0))
    in_active = np.zeros(nc, dtype=bool)
    skipped = np.zeros(nc, dtype=bool)
    gnorm = np.abs(G).sum(axis=1)
    it = 0

    while True:
        slack = rhs - G @ z
        scale = 1.0 + np.abs(rhs) + gnorm * (np.abs(z).max() if nz else 0.0)
        p = -1
        for i in range(nc):
            if not in_active[i] and not skipped[i] and slack[i] < -tol * scale[i]:
                p = i
                break
        if p < 0:
            lam = np.zeros(nc)
            lam[active] = u
            return OPTIMAL, z, lam, list(active), it, np.zeros(0)

        n_p = -G[p]
        u_p = 0.0
        s_p = slack[p]
        while True:
            it += 1
            if it > max_iter:
                lam = np.zeros(nc)
                lam[active] = u
                return MAX_ITER, z, lam, list(active), it, np.zeros(0)

            dvec = J.T @ n_p
            c, w = _orthogonalize(q1, dvec)
            q = len(active)
            if q:
                r = solve_triangular(r_mat, c, lower=False)
            else:
                r = np.zeros(0)
            zstep = J @ w

            t1 = np.inf
            k = -1
            rmax = np.max(np.abs(r)) if q else 0.0
            for j in range(q):
                if r[j] > 1e-14 * max(1.0, rmax):
                    ratio = u[j] / r[j]
                    if ratio < t1 or (ratio == t1 and active[j] < active[k]):
                        t1 = ratio
                        k = j

            wn2 = w @ w
            dn = np.sqrt(dvec @ dvec)
            if np.sqrt(wn2) <= 1e-12 * max(dn, 1e-300):
                t2 = np.inf
            else:
                t2 = -s_p / wn2

            if t1 == np.inf and t2 == np.inf:
                if u_p == 0.0 and -s_p <= WEAK_TOL * scale[p]:
                    # dependent row violated only by rounding: treat as weakly active
                    skipped[p] = True
                    break
                cert = np.zeros(nc)
                cert[p] = 1.0
                for j in range(q):
                    cert[active[j]] = -r[j]
                lam = np.zeros(nc)
                lam[active] = u
                return INFEASIBLE, z, lam, list(active), it, cert

            if t2 == np.inf:
                u = u - t1 * r
                u_p += t1
                in_active[active[k]] = False
                del active[k]
                u = np.delete(u, k)
                q1, r_mat = _thin_qr(J, G, active)
                continue

            t = min(t1, t2)
            z = z + t * zstep
            if q:
                u = u - t * r
            u_p += t
            if t2 <= t1:
                nrm = np.sqrt(wn2)
                q1 = np.column_stack([q1, w / nrm])
                r_new = np.zeros((q + 1, q + 1))
                r_new[:q, :q] = r_mat
                r_new[:q, q] = c
                r_new[q, q] = nrm
                r_mat = r_new
                active.append(p)
                u = np.append(u, u_p)
                in_active[p] = True
                break
            in_active[active[k]] = False
            del active[k]
            u = np.delete(u, k)
            q1, r_mat = _thin_qr(J, G, active)
            s_p = rhs[p] - G[p] @ z


def locate(a_all, b_all, row_start, xi, tol=1e-9):
    """Index of the first region whose rows ``a xi <= b + tol`` all hold, or -1.

    Regions are stacked: rows ``row_start[i]:row_start[i + 1]`` belong to
    region ``i``.
    """
    viol = a_all @ xi - b_all
    for i in range(len(row_start) - 1):
        lo, hi = row_start[i], row_start[i + 1]
        if hi == lo or np.all(viol[lo:hi] <= tol):
            return i
    return -1


def locate_many(a_all, b_all, row_start, xis, tol=1e-9):
    out = np.empty(len(xis), dtype=np.int64)
    for j, xi in enumerate(xis):
        out[j] = locate(a_all, b_all, row_start, xi, tol)
    return out
