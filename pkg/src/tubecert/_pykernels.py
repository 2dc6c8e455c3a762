"""Pure numpy implementations of the hot kernels.

These mirror ``_ckernels.pyx`` one-to-one and are used whenever the compiled
extension is unavailable. Keep the two in sync: the test-suite runs both.
"""

import numpy as np

QP_OPTIMAL = 0
QP_INFEASIBLE = 1
QP_MAX_ITER = 2
QP_NUMERICAL = 3


def zonotope_support(D, G):
    """Sum over generators of |<d, g>| for every row d of ``D``."""
    if G.shape[1] == 0:
        return np.zeros(D.shape[0])
    return np.abs(D @ G).sum(axis=1)


def max_violation(A, x, b):
    """Return (index, value) of the largest entry of ``A @ x - b``."""
    if A.shape[0] == 0:
        return -1, -np.inf
    r = A @ x - b
    k = int(np.argmax(r))
    return k, float(r[k])


def qp_ineq(Hinv, x0, A, b, tol, max_iter):
    """Dual active-set (Goldfarb-Idnani) solve of a strictly convex QP.

    Minimises 0.5 x'Hx + f'x subject to A x <= b, given ``Hinv`` = H^-1 and
    the unconstrained minimiser ``x0`` = -H^-1 f.

    Returns ``(x, lam, active, iterations, status)`` where ``lam`` holds one
    multiplier per row of ``A`` (zero for inactive rows).
    """
    m = A.shape[0]
    x = x0.copy()
    lam = np.zeros(m)
    active = []
    lam_act = []
    status = QP_OPTIMAL
    it = 0
    while True:
        # most violated constraint, active rows excluded
        if m == 0:
            break
        r = A @ x - b
        if active:
            r[active] = -np.inf
        p = int(np.argmax(r))
        viol = r[p]
        if viol <= tol:
            break
        ap = A[p]
        lam_p = 0.0
        while True:
            it += 1
            if it > max_iter:
                status = QP_MAX_ITER
                break
            q = len(active)
            Hap = Hinv @ ap
            if q:
                N = A[active].T
                HN = Hinv @ N
                S = N.T @ HN
                try:
                    rr = np.linalg.solve(S, N.T @ Hap)
                except np.linalg.LinAlgError:
                    status = QP_NUMERICAL
                    break
                z = -(Hap - HN @ rr)
            else:
                rr = np.zeros(0)
                z = -Hap
            slope = float(ap @ z)
            t2 = viol / -slope if slope < -1e-14 * (1.0 + float(ap @ ap)) else np.inf
            t1 = np.inf
            kblock = -1
            for k in range(q):
                if rr[k] > 1e-14:
                    tk = lam_act[k] / rr[k]
                    if tk < t1:
                        t1 = tk
                        kblock = k
            if t1 == np.inf and t2 == np.inf:
                status = QP_INFEASIBLE
                break
            t = min(t1, t2)
            for k in range(q):
                lam_act[k] -= t * rr[k]
            lam_p += t
            if t2 < np.inf:
                x = x + t * z
                viol = float(ap @ x) - b[p]
            if t2 <= t1:
                active.append(p)
                lam_act.append(lam_p)
                break
            del active[kblock]
            del lam_act[kblock]
        if status != QP_OPTIMAL:
            break
        if it > max_iter:
            status = QP_MAX_ITER
            break
    for k, j in enumerate(active):
        lam[j] = max(lam_act[k], 0.0)
    return x, lam, np.array(active, dtype=np.int64), it, status
