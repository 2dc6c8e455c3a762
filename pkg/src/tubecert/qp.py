"""Dense strictly convex QPs: minimise 0.5 x'Hx + f'x s.t. A x <= b, E x = e."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels

__all__ = ["QpProblem", "QpSolution", "NotStrictlyConvexError", "solve_qp", "kkt_residuals", "chol_inverse"]

_STATUS = {
    _kernels.QP_OPTIMAL: "optimal",
    _kernels.QP_INFEASIBLE: "infeasible",
    _kernels.QP_MAX_ITER: "max_iter",
    _kernels.QP_NUMERICAL: "numerical",
}


class NotStrictlyConvexError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class QpProblem:
    H: np.ndarray
    f: np.ndarray
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    E: np.ndarray | None = None
    e: np.ndarray | None = None

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        n = H.shape[0]
        if H.shape != (n, n):
            raise ValueError("H must be square")
        if not np.allclose(H, H.T, rtol=0, atol=1e-12 * max(1.0, np.abs(H).max())):
            raise ValueError("H must be symmetric")
        object.__setattr__(self, "H", 0.5 * (H + H.T))
        object.__setattr__(self, "f", np.asarray(self.f, dtype=float).reshape(n))
        for M, v, lbl in (("A", "b", "inequality"), ("E", "e", "equality")):
            Mv = getattr(self, M)
            if Mv is None:
                object.__setattr__(self, M, np.zeros((0, n)))
                object.__setattr__(self, v, np.zeros(0))
                continue
            Mv = np.atleast_2d(np.asarray(Mv, dtype=float))
            vv = np.asarray(getattr(self, v), dtype=float).reshape(-1)
            if Mv.shape[1] != n or Mv.shape[0] != vv.size:
                raise ValueError(f"{lbl} constraint dimensions do not match")
            object.__setattr__(self, M, Mv)
            object.__setattr__(self, v, vv)

    @property
    def n(self):
        return self.H.shape[0]

    def objective(self, x):
        return float(0.5 * x @ self.H @ x + self.f @ x)


@dataclass(frozen=True, eq=False)
class QpSolution:
    x: np.ndarray
    objective: float
    status: str
    lam: np.ndarray  # inequality multipliers (>= 0)
    nu: np.ndarray  # equality multipliers
    iterations: int
    stationarity: float
    primal: float
    dual: float
    complementarity: float

    @property
    def ok(self):
        return self.status == "optimal"

    @property
    def kkt(self):
        return max(self.stationarity, self.primal, self.dual, self.complementarity)


def chol_inverse(H):
    """H^-1 through a Cholesky factor; raises if H is not positive definite."""
    try:
        L = np.linalg.cholesky(H)
    except np.linalg.LinAlgError as exc:
        raise NotStrictlyConvexError("Hessian is not positive definite") from exc
    Li = np.linalg.inv(L)
    return Li.T @ Li


def kkt_residuals(H, f, A, b, x, lam, E=None, e=None, nu=None):
    """(stationarity, primal, dual, complementarity), all as infinity norms."""
    g = H @ x + f
    if A.shape[0]:
        g = g + A.T @ lam
        r = A @ x - b
        primal = max(0.0, float(r.max()))
        dual = max(0.0, float(-lam.min()))
        comp = float(np.abs(lam * r).max())
    else:
        primal = dual = comp = 0.0
    if E is not None and E.shape[0]:
        g = g + E.T @ nu
        primal = max(primal, float(np.abs(E @ x - e).max()))
    return float(np.abs(g).max()) if g.size else 0.0, primal, dual, comp


def solve_qp(prob: QpProblem, tol=1e-10, max_iter=None, Hinv=None) -> QpSolution:
    """Dual active-set solution; equalities are eliminated through a null-space basis."""
    H, f, A, b, E, e = prob.H, prob.f, prob.A, prob.b, prob.E, prob.e
    n = prob.n
    if E.shape[0]:
        U, s, Vt = np.linalg.svd(E)
        rank = int(np.sum(s > 1e-12 * max(1.0, s[0])))
        xp = Vt[:rank].T @ ((U[:, :rank].T @ e) / s[:rank])
        if np.abs(E @ xp - e).max() > 1e-9 * (1.0 + np.abs(e).max()):
            return _failed(prob, "infeasible")
        N = Vt[rank:].T
        Hr = N.T @ H @ N
        fr = N.T @ (H @ xp + f)
        Ar = A @ N
        br = b - A @ xp
        Hri = chol_inverse(Hr) if N.shape[1] else np.zeros((0, 0))
    else:
        xp, N = np.zeros(n), None
        Hr, fr, Ar, br = H, f, A, b
        Hri = chol_inverse(H) if Hinv is None else Hinv
    m = Ar.shape[0]
    if max_iter is None:
        max_iter = 50 * (m + n + 10)
    if Hr.shape[0] == 0:
        y = np.zeros(0)
        ok = not m or float(np.min(br)) >= -tol
        lam = np.zeros(m)
        code = _kernels.QP_OPTIMAL if ok else _kernels.QP_INFEASIBLE
        it = 0
    else:
        y0 = -Hri @ fr
        if m:
            # drop rows that vanish on the reduced space; they only test feasibility
            norms = np.abs(Ar).max(axis=1)
            live = norms > 1e-14
            if np.any(~live) and np.any(br[~live] < -tol):
                return _failed(prob, "infeasible")
            y, lam_live, _, it, code = _kernels.qp_ineq(Hri, y0, Ar[live], br[live], tol, max_iter)
            lam = np.zeros(m)
            lam[live] = lam_live
        else:
            y, lam, it, code = y0, np.zeros(0), 0, _kernels.QP_OPTIMAL
    x = xp + (N @ y if N is not None else y)
    nu = np.zeros(E.shape[0])
    if E.shape[0]:
        g = H @ x + f + A.T @ lam
        nu = np.linalg.lstsq(E.T, -g, rcond=None)[0]
    st, pr, du, co = kkt_residuals(H, f, A, b, x, lam, E, e, nu)
    return QpSolution(x, prob.objective(x), _STATUS[code], lam, nu, it, st, pr, du, co)


def _failed(prob, status):
    n = prob.n
    nan = float("nan")
    return QpSolution(np.full(n, np.nan), nan, status, np.zeros(prob.A.shape[0]),
                      np.zeros(prob.E.shape[0]), 0, nan, nan, nan, nan)
