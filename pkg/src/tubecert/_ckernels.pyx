# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of the kernels in ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt, INFINITY

cnp.import_array()

DEF QP_OPTIMAL = 0
DEF QP_INFEASIBLE = 1
DEF QP_MAX_ITER = 2
DEF QP_NUMERICAL = 3


def zonotope_support(const double[:, ::1] D, const double[:, ::1] G):
    cdef Py_ssize_t k = D.shape[0], n = D.shape[1], p = G.shape[1]
    cdef Py_ssize_t i, j, l
    cdef double acc, dot
    out = np.zeros(k)
    cdef double[::1] o = out
    for i in range(k):
        acc = 0.0
        for j in range(p):
            dot = 0.0
            for l in range(n):
                dot += D[i, l] * G[l, j]
            acc += fabs(dot)
        o[i] = acc
    return out


def max_violation(const double[:, ::1] A, const double[::1] x, const double[::1] b):
    cdef Py_ssize_t m = A.shape[0], n = A.shape[1]
    cdef Py_ssize_t i, l, best = -1
    cdef double r, vbest = -INFINITY
    for i in range(m):
        r = -b[i]
        for l in range(n):
            r += A[i, l] * x[l]
        if r > vbest:
            vbest = r
            best = i
    return best, vbest


cdef int _chol_solve(double[:, ::1] S, double[:, ::1] L, double[::1] rhs,
                     double[::1] out, Py_ssize_t q) nogil:
    # in-place Cholesky of the leading q x q block of S into L, then solve
    cdef Py_ssize_t i, j, k
    cdef double s
    for i in range(q):
        for j in range(i + 1):
            s = S[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            if i == j:
                if s <= 0.0:
                    return -1
                L[i, i] = sqrt(s)
            else:
                L[i, j] = s / L[j, j]
    for i in range(q):
        s = rhs[i]
        for k in range(i):
            s -= L[i, k] * out[k]
        out[i] = s / L[i, i]
    for i in range(q - 1, -1, -1):
        s = out[i]
        for k in range(i + 1, q):
            s -= L[k, i] * out[k]
        out[i] = s / L[i, i]
    return 0


def qp_ineq(const double[:, ::1] Hinv, const double[::1] x0, const double[:, ::1] A,
            const double[::1] b, double tol, int max_iter):
    cdef Py_ssize_t n = x0.shape[0], m = A.shape[0]
    cdef Py_ssize_t i, j, k, l, p, q = 0, kblock
    cdef int status = QP_OPTIMAL, it = 0
    cdef double viol, r, slope, t, t1, t2, tk, lam_p, apap, s

    x_arr = np.array(x0, copy=True)
    lam_arr = np.zeros(m)
    cdef double[::1] x = x_arr
    cdef double[::1] lam = lam_arr

    cdef Py_ssize_t cap = n if n < m else m
    act_arr = np.zeros(cap + 1, dtype=np.intp)
    cdef Py_ssize_t[::1] act = act_arr
    cdef double[::1] lam_act = np.zeros(cap + 1)
    cdef char[::1] is_act = np.zeros(m, dtype=np.int8)
    cdef double[::1] Hap = np.zeros(n)
    cdef double[::1] z = np.zeros(n)
    cdef double[:, ::1] HN = np.zeros((n, cap + 1))
    cdef double[:, ::1] S = np.zeros((cap + 1, cap + 1))
    cdef double[:, ::1] L = np.zeros((cap + 1, cap + 1))
    cdef double[::1] rhs = np.zeros(cap + 1)
    cdef double[::1] rr = np.zeros(cap + 1)

    while m > 0:
        # most violated inactive row
        p = -1
        viol = -INFINITY
        for i in range(m):
            if is_act[i]:
                continue
            r = -b[i]
            for l in range(n):
                r += A[i, l] * x[l]
            if r > viol:
                viol = r
                p = i
        if p < 0 or viol <= tol:
            break
        lam_p = 0.0
        apap = 0.0
        for l in range(n):
            apap += A[p, l] * A[p, l]
        while True:
            it += 1
            if it > max_iter:
                status = QP_MAX_ITER
                break
            for i in range(n):
                s = 0.0
                for l in range(n):
                    s += Hinv[i, l] * A[p, l]
                Hap[i] = s
            if q > 0:
                for k in range(q):
                    for i in range(n):
                        s = 0.0
                        for l in range(n):
                            s += Hinv[i, l] * A[act[k], l]
                        HN[i, k] = s
                for k in range(q):
                    for j in range(k + 1):
                        s = 0.0
                        for l in range(n):
                            s += A[act[k], l] * HN[l, j]
                        S[k, j] = s
                        S[j, k] = s
                    s = 0.0
                    for l in range(n):
                        s += A[act[k], l] * Hap[l]
                    rhs[k] = s
                if _chol_solve(S, L, rhs, rr, q) != 0:
                    status = QP_NUMERICAL
                    break
                for i in range(n):
                    s = Hap[i]
                    for k in range(q):
                        s -= HN[i, k] * rr[k]
                    z[i] = -s
            else:
                for i in range(n):
                    z[i] = -Hap[i]
            slope = 0.0
            for l in range(n):
                slope += A[p, l] * z[l]
            if slope < -1e-14 * (1.0 + apap):
                t2 = viol / -slope
            else:
                t2 = INFINITY
            t1 = INFINITY
            kblock = -1
            for k in range(q):
                if rr[k] > 1e-14:
                    tk = lam_act[k] / rr[k]
                    if tk < t1:
                        t1 = tk
                        kblock = k
            if t1 == INFINITY and t2 == INFINITY:
                status = QP_INFEASIBLE
                break
            t = t1 if t1 < t2 else t2
            for k in range(q):
                lam_act[k] -= t * rr[k]
            lam_p += t
            if t2 < INFINITY:
                viol = -b[p]
                for l in range(n):
                    x[l] += t * z[l]
                    viol += A[p, l] * x[l]
            if t2 <= t1:
                act[q] = p
                lam_act[q] = lam_p
                is_act[p] = 1
                q += 1
                break
            is_act[act[kblock]] = 0
            for k in range(kblock, q - 1):
                act[k] = act[k + 1]
                lam_act[k] = lam_act[k + 1]
            q -= 1
        if status != QP_OPTIMAL:
            break
    for k in range(q):
        lam[act[k]] = lam_act[k] if lam_act[k] > 0.0 else 0.0
    return x_arr, lam_arr, act_arr[:q].astype(np.int64), it, status
