# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: dual active-set QP iteration and region point location.

Same algorithm and return conventions as ``_kernels_py``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, INFINITY

cnp.import_array()

cdef double WEAK_TOL = 1e-9

cdef enum:
    OPTIMAL = 0
    INFEASIBLE = 1
    MAX_ITER = 2


cdef void _matvec_t(double[:, ::1] J, double[::1] x, double[::1] out, Py_ssize_t n) noexcept nogil:
    # out = J.T @ x
    cdef Py_ssize_t i, j
    for j in range(n):
        out[j] = 0.0
    for i in range(n):
        if x[i] != 0.0:
            for j in range(n):
                out[j] += J[i, j] * x[i]


cdef void _matvec(double[:, ::1] J, double[::1] x, double[::1] out, Py_ssize_t n) noexcept nogil:
    # out = J @ x
    cdef Py_ssize_t i, j
    cdef double s
    for i in range(n):
        s = 0.0
        for j in range(n):
            s += J[i, j] * x[j]
        out[i] = s


cdef void _cgs_pass(double[:, ::1] q1, Py_ssize_t q, double[::1] w,
                    double[::1] c, double[::1] tmp, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double s
    for j in range(q):
        s = 0.0
        for i in range(n):
            s += q1[i, j] * w[i]
        tmp[j] = s
    for i in range(n):
        s = 0.0
        for j in range(q):
            s += q1[i, j] * tmp[j]
        w[i] -= s
    for j in range(q):
        c[j] += tmp[j]


cdef void _project(double[:, ::1] q1, Py_ssize_t q, double[::1] dvec,
                   double[::1] c, double[::1] w, double[::1] tmp, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(n):
        w[i] = dvec[i]
    for j in range(q):
        c[j] = 0.0
    if q == 0:
        return
    _cgs_pass(q1, q, w, c, tmp, n)
    _cgs_pass(q1, q, w, c, tmp, n)


cdef void _rebuild_qr(double[:, ::1] J, double[:, ::1] G, Py_ssize_t[::1] active, Py_ssize_t q,
                      double[:, ::1] q1, double[:, ::1] rm, double[::1] dvec, double[::1] negg,
                      double[::1] c, double[::1] w, double[::1] tmp, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t j, i, l
    cdef double nrm
    for j in range(q):
        for i in range(n):
            negg[i] = -G[active[j], i]
        _matvec_t(J, negg, dvec, n)
        _project(q1, j, dvec, c, w, tmp, n)
        for l in range(q):
            rm[l, j] = 0.0
        for l in range(j):
            rm[l, j] = c[l]
        nrm = 0.0
        for i in range(n):
            nrm += w[i] * w[i]
        nrm = sqrt(nrm)
        rm[j, j] = nrm
        for i in range(n):
            q1[i, j] = w[i] / nrm


def dual_active_set(J_in, f_in, G_in, rhs_in, long max_iter, double tol=1e-12):
    """Dual active-set QP iteration; see ``_kernels_py.dual_active_set``."""
    cdef double[:, ::1] J = np.ascontiguousarray(J_in, dtype=np.float64)
    cdef double[::1] f = np.ascontiguousarray(f_in, dtype=np.float64)
    cdef double[:, ::1] G = np.ascontiguousarray(G_in, dtype=np.float64).reshape(-1, J.shape[0])
    cdef double[::1] rhs = np.ascontiguousarray(rhs_in, dtype=np.float64)
    cdef Py_ssize_t n = f.shape[0]
    cdef Py_ssize_t nc = rhs.shape[0]
    cdef Py_ssize_t qmax = n if n < nc else nc

    z_arr = np.zeros(n)
    cdef double[::1] z = z_arr
    cdef double[::1] tmpn = np.zeros(n)
    cdef double[::1] dvec = np.zeros(n)
    cdef double[::1] w = np.zeros(n)
    cdef double[::1] zstep = np.zeros(n)
    cdef double[::1] negg = np.zeros(n)
    cdef double[::1] c = np.zeros(qmax + 1)
    cdef double[::1] r = np.zeros(qmax + 1)
    cdef double[::1] tmpq = np.zeros(qmax + 1)
    cdef double[::1] u = np.zeros(qmax + 1)
    cdef double[:, ::1] q1 = np.zeros((n, qmax + 1))
    cdef double[:, ::1] rm = np.zeros((qmax + 1, qmax + 1))
    cdef Py_ssize_t[::1] active = np.zeros(qmax + 1, dtype=np.intp)
    cdef char[::1] in_active = np.zeros(nc, dtype=np.int8)
    cdef char[::1] skipped = np.zeros(nc, dtype=np.int8)
    cdef double[::1] gnorm = np.abs(np.asarray(G)).sum(axis=1) if nc else np.zeros(0)
    cdef double[::1] slack = np.zeros(nc)

    cdef Py_ssize_t i, j, l, k, p, q = 0
    cdef long it = 0
    cdef double s, scale, zmax, scale_p = 0.0, u_p, s_p, t1, t2, t, ratio, rmax, wn2, dn, nrm

    # unconstrained minimizer z = -J J' f
    _matvec_t(J, f, tmpn, n)
    _matvec(J, tmpn, z, n)
    for i in range(n):
        z[i] = -z[i]

    while True:
        p = -1
        zmax = 0.0
        for j in range(n):
            if fabs(z[j]) > zmax:
                zmax = fabs(z[j])
        for i in range(nc):
            s = rhs[i]
            for j in range(n):
                s -= G[i, j] * z[j]
            slack[i] = s
            scale = 1.0 + fabs(rhs[i]) + gnorm[i] * zmax
            if p < 0 and not in_active[i] and not skipped[i] and s < -tol * scale:
                p = i
                scale_p = scale
        if p < 0:
            return _pack(OPTIMAL, z_arr, u, active, q, nc, it, None)

        for j in range(n):
            negg[j] = -G[p, j]
        u_p = 0.0
        s_p = slack[p]
        while True:
            it += 1
            if it > max_iter:
                return _pack(MAX_ITER, z_arr, u, active, q, nc, it, None)

            _matvec_t(J, negg, dvec, n)
            _project(q1, q, dvec, c, w, tmpq, n)
            # back substitution r = R^{-1} c
            for j in range(q - 1, -1, -1):
                s = c[j]
                for l in range(j + 1, q):
                    s -= rm[j, l] * r[l]
                r[j] = s / rm[j, j]
            _matvec(J, w, zstep, n)

            t1 = INFINITY
            k = -1
            rmax = 0.0
            for j in range(q):
                if fabs(r[j]) > rmax:
                    rmax = fabs(r[j])
            for j in range(q):
                if r[j] > 1e-14 * (rmax if rmax > 1.0 else 1.0):
                    ratio = u[j] / r[j]
                    if ratio < t1 or (ratio == t1 and active[j] < active[k]):
                        t1 = ratio
                        k = j

            wn2 = 0.0
            dn = 0.0
            for i in range(n):
                wn2 += w[i] * w[i]
                dn += dvec[i] * dvec[i]
            dn = sqrt(dn)
            if sqrt(wn2) <= 1e-12 * (dn if dn > 1e-300 else 1e-300):
                t2 = INFINITY
            else:
                t2 = -s_p / wn2

            if t1 == INFINITY and t2 == INFINITY:
                if u_p == 0.0 and -s_p <= WEAK_TOL * scale_p:
                    # dependent row violated only by rounding: treat as weakly active
                    skipped[p] = 1
                    break
                cert = np.zeros(nc)
                cert[p] = 1.0
                for j in range(q):
                    cert[active[j]] = -r[j]
                return _pack(INFEASIBLE, z_arr, u, active, q, nc, it, cert)

            if t2 == INFINITY:
                for j in range(q):
                    u[j] -= t1 * r[j]
                u_p += t1
                in_active[active[k]] = 0
                for j in range(k, q - 1):
                    active[j] = active[j + 1]
                    u[j] = u[j + 1]
                q -= 1
                _rebuild_qr(J, G, active, q, q1, rm, dvec, tmpn, c, w, tmpq, n)
                for j in range(n):
                    negg[j] = -G[p, j]
                continue

            t = t1 if t1 < t2 else t2
            for i in range(n):
                z[i] += t * zstep[i]
            for j in range(q):
                u[j] -= t * r[j]
            u_p += t
            if t2 <= t1:
                nrm = sqrt(wn2)
                for i in range(n):
                    q1[i, q] = w[i] / nrm
                for l in range(q + 1):
                    rm[l, q] = 0.0
                    rm[q, l] = 0.0
                for l in range(q):
                    rm[l, q] = c[l]
                rm[q, q] = nrm
                active[q] = p
                u[q] = u_p
                in_active[p] = 1
                q += 1
                break
            in_active[active[k]] = 0
            for j in range(k, q - 1):
                active[j] = active[j + 1]
                u[j] = u[j + 1]
            q -= 1
            _rebuild_qr(J, G, active, q, q1, rm, dvec, tmpn, c, w, tmpq, n)
            for j in range(n):
                negg[j] = -G[p, j]
            s_p = rhs[p]
            for j in range(n):
                s_p -= G[p, j] * z[j]


cdef _pack(int status, z_arr, double[::1] u, Py_ssize_t[::1] active, Py_ssize_t q,
           Py_ssize_t nc, long it, cert):
    lam = np.zeros(nc)
    act = []
    cdef Py_ssize_t j
    for j in range(q):
        lam[active[j]] = u[j]
        act.append(int(active[j]))
    if cert is None:
        cert = np.zeros(0)
    return status, z_arr, lam, act, int(it), cert


cdef Py_ssize_t _locate_one(double[:, ::1] a, double[::1] b, Py_ssize_t[::1] row_start,
                            double[::1] xi, double tol) noexcept nogil:
    cdef Py_ssize_t nreg = row_start.shape[0] - 1
    cdef Py_ssize_t d = xi.shape[0]
    cdef Py_ssize_t reg, row, j
    cdef double s
    cdef bint inside
    for reg in range(nreg):
        inside = True
        for row in range(row_start[reg], row_start[reg + 1]):
            s = -b[row]
            for j in range(d):
                s += a[row, j] * xi[j]
            if s > tol:
                inside = False
                break
        if inside:
            return reg
    return -1


def locate(a_all, b_all, row_start, xi, double tol=1e-9):
    """Index of the first region containing ``xi`` or -1."""
    cdef double[:, ::1] a = np.ascontiguousarray(a_all, dtype=np.float64)
    cdef double[::1] b = np.ascontiguousarray(b_all, dtype=np.float64)
    cdef Py_ssize_t[::1] rs = np.ascontiguousarray(row_start, dtype=np.intp)
    cdef double[::1] x = np.ascontiguousarray(xi, dtype=np.float64)
    return int(_locate_one(a, b, rs, x, tol))


def locate_many(a_all, b_all, row_start, xis, double tol=1e-9):
    cdef double[:, ::1] a = np.ascontiguousarray(a_all, dtype=np.float64)
    cdef double[::1] b = np.ascontiguousarray(b_all, dtype=np.float64)
    cdef Py_ssize_t[::1] rs = np.ascontiguousarray(row_start, dtype=np.intp)
    cdef double[:, ::1] xs = np.ascontiguousarray(xis, dtype=np.float64)
    out = np.empty(xs.shape[0], dtype=np.int64)
    cdef long long[::1] o = out
    cdef Py_ssize_t j
    with nogil:
        for j in range(xs.shape[0]):
            o[j] = _locate_one(a, b, rs, xs[j], tol)
    return out
