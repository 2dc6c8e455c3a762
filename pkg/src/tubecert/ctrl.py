"""Dense linear-systems utilities: discretization, LQR, eigenvalues."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "StateSpace",
    "LqrResult",
    "ConvergenceError",
    "zoh_discretize",
    "dlqr",
    "dare_residual",
    "eigenvalues",
    "spectral_radius",
    "is_schur",
]


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class StateSpace:
    A: np.ndarray
    B: np.ndarray
    dt: float = 0.0

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise ValueError(f"B has {B.shape[0]} rows, A has {A.shape[0]}")
        if self.dt < 0:
            raise ValueError("dt must be >= 0")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def is_discrete(self):
        return self.dt > 0


@dataclass(frozen=True)
class LqrResult:
    K: np.ndarray
    P: np.ndarray
    iterations: int
    residual: float = field(default=0.0)


def _expm_series(M, tol=1e-12):
    """exp(M) by scaling, truncated Taylor series, then repeated squaring."""
    nrm = np.abs(M).sum(axis=1).max() if M.size else 0.0
    s = max(0, int(math.ceil(math.log2(nrm / 0.5))) if nrm > 0.5 else 0)
    X = M / (2.0 ** s)
    n = M.shape[0]
    E = np.eye(n)
    term = np.eye(n)
    for k in range(1, 60):
        term = term @ X / k
        E = E + term
        if np.abs(term).max() <= tol * max(1.0, np.abs(E).max()):
            break
    for _ in range(s):
        E = E @ E
    return E


def zoh_discretize(sys: StateSpace, Ts: float, method: str = "zoh") -> StateSpace:
    """Sample a continuous system at period ``Ts``.

    ``method="zoh"`` is the exact zero-order hold. ``method="euler"`` gives
    (I + Ts A, Ts B) and is only meant for diagnosis.
    """
    if Ts <= 0:
        raise ValueError("Ts must be positive")
    if sys.is_discrete:
        raise ValueError("system is already discrete")
    n, m = sys.n, sys.m
    if method == "euler":
        return StateSpace(np.eye(n) + Ts * sys.A, Ts * sys.B, Ts)
    if method != "zoh":
        raise ValueError(f"unknown discretization method {method!r}")
    M = np.zeros((n + m, n + m))
    M[:n, :n] = sys.A * Ts
    M[:n, n:] = sys.B * Ts
    E = _expm_series(M)
    return StateSpace(E[:n, :n], E[:n, n:], Ts)


def dare_residual(A, B, Q, R, P) -> float:
    BtP = B.T @ P
    rhs = Q + A.T @ P @ A - A.T @ P @ B @ np.linalg.solve(R + BtP @ B, BtP @ A)
    return float(np.abs(P - rhs).max())


def dlqr(A, B, Q, R, tol=1e-10, max_iter=200) -> LqrResult:
    """Infinite-horizon discrete LQR with u = K x.

    The Riccati equation is solved by the structure-preserving doubling
    algorithm, which converges quadratically for stabilizable-detectable
    pairs.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float)
    if B.ndim < 2:
        B = B.reshape(-1, 1)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    n = A.shape[0]
    Ak = A.copy()
    Gk = B @ np.linalg.solve(R, B.T)
    Hk = Q.copy()
    I = np.eye(n)
    P = Hk
    it = 0
    for it in range(1, max_iter + 1):
        W = I + Gk @ Hk
        try:
            WiA = np.linalg.solve(W, Ak)
            WiG = np.linalg.solve(W, Gk)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError("singular doubling step") from exc
        with np.errstate(over="ignore", invalid="ignore"):
            Hn = Hk + Ak.T @ Hk @ WiA
            Gk = Gk + Ak @ WiG @ Ak.T
            Ak = Ak @ WiA
        Hn = 0.5 * (Hn + Hn.T)
        step = np.abs(Hn - Hk).max()
        Hk = Hn
        if not np.all(np.isfinite(Hk)):
            raise ConvergenceError("doubling iteration diverged; pair not stabilizable?")
        if step <= tol * max(1.0, np.abs(Hk).max()):
            break
    else:
        raise ConvergenceError(f"DARE did not converge in {max_iter} doubling steps")
    P = Hk
    res = dare_residual(A, B, Q, R, P)
    K = -np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
    return LqrResult(K, P, it, res)


# ---------------------------------------------------------------------------
# eigenvalues


def _hessenberg(M):
    """Householder reduction to upper Hessenberg form."""
    H = np.array(M, dtype=float)
    n = H.shape[0]
    for k in range(n - 2):
        x = H[k + 1:, k].copy()
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        v = x
        v[0] += math.copysign(alpha, x[0]) if x[0] != 0 else alpha
        v /= np.linalg.norm(v)
        H[k + 1:, k:] -= 2.0 * np.outer(v, v @ H[k + 1:, k:])
        H[:, k + 1:] -= 2.0 * np.outer(H[:, k + 1:] @ v, v)
        H[k + 2:, k] = 0.0
    return H


def _eig2(a, b, c, d):
    tr = a + d
    det = a * d - b * c
    disc = 0.25 * tr * tr - det
    if disc >= 0:
        r = math.sqrt(disc)
        # avoid cancellation in the smaller root
        big = 0.5 * tr + math.copysign(r, tr) if tr != 0 else r
        small = det / big if big != 0 else 0.5 * tr - r
        return [complex(big), complex(small)]
    r = math.sqrt(-disc)
    return [complex(0.5 * tr, r), complex(0.5 * tr, -r)]


def _hqr(H, max_iter=60):
    """Francis double-shift QR on an upper Hessenberg matrix (in place)."""
    a = H
    n = a.shape[0]
    wr = np.zeros(n)
    wi = np.zeros(n)
    anorm = np.abs(a).sum()
    nn = n - 1
    t = 0.0
    p = q = r = 0.0
    while nn >= 0:
        its = 0
        while True:
            l = nn
            while l >= 1:
                s = abs(a[l - 1, l - 1]) + abs(a[l, l])
                if s == 0.0:
                    s = anorm
                if abs(a[l, l - 1]) + s == s:
                    a[l, l - 1] = 0.0
                    break
                l -= 1
            x = a[nn, nn]
            if l == nn:
                wr[nn] = x + t
                wi[nn] = 0.0
                nn -= 1
                break
            y = a[nn - 1, nn - 1]
            w = a[nn, nn - 1] * a[nn - 1, nn]
            if l == nn - 1:
                p = 0.5 * (y - x)
                q = p * p + w
                z = math.sqrt(abs(q))
                x += t
                if q >= 0.0:
                    z = p + math.copysign(z, p)
                    wr[nn - 1] = wr[nn] = x + z
                    if z:
                        wr[nn] = x - w / z
                    wi[nn - 1] = wi[nn] = 0.0
                else:
                    wr[nn - 1] = wr[nn] = x + p
                    wi[nn - 1] = -z
                    wi[nn] = z
                nn -= 2
                break
            if its == max_iter:
                raise ConvergenceError("QR iteration did not converge")
            if its == 10 or its == 20:
                # exceptional shift
                t += x
                for i in range(nn + 1):
                    a[i, i] -= x
                s = abs(a[nn, nn - 1]) + abs(a[nn - 1, nn - 2])
                y = x = 0.75 * s
                w = -0.4375 * s * s
            its += 1
            m = nn - 2
            while m >= l:
                z = a[m, m]
                r = x - z
                s = y - z
                p = (r * s - w) / a[m + 1, m] + a[m, m + 1]
                q = a[m + 1, m + 1] - z - r - s
                r = a[m + 2, m + 1]
                s = abs(p) + abs(q) + abs(r)
                p /= s
                q /= s
                r /= s
                if m == l:
                    break
                u = abs(a[m, m - 1]) * (abs(q) + abs(r))
                v = abs(p) * (abs(a[m - 1, m - 1]) + abs(z) + abs(a[m + 1, m + 1]))
                if u + v == v:
                    break
                m -= 1
            for i in range(m + 2, nn + 1):
                a[i, i - 2] = 0.0
                if i != m + 2:
                    a[i, i - 3] = 0.0
            k = m
            while k <= nn - 1:
                if k != m:
                    p = a[k, k - 1]
                    q = a[k + 1, k - 1]
                    r = 0.0
                    if k != nn - 1:
                        r = a[k + 2, k - 1]
                    x = abs(p) + abs(q) + abs(r)
                    if x != 0.0:
                        p /= x
                        q /= x
                        r /= x
                s = math.copysign(math.sqrt(p * p + q * q + r * r), p)
                if s != 0.0:
                    if k == m:
                        if l != m:
                            a[k, k - 1] = -a[k, k - 1]
                    else:
                        a[k, k - 1] = -s * x
                    p += s
                    x = p / s
                    y = q / s
                    z = r / s
                    q /= p
                    r /= p
                    for j in range(k, nn + 1):
                        p = a[k, j] + q * a[k + 1, j]
                        if k != nn - 1:
                            p += r * a[k + 2, j]
                            a[k + 2, j] -= p * z
                        a[k + 1, j] -= p * y
                        a[k, j] -= p * x
                    mmin = nn if nn < k + 3 else k + 3
                    for i in range(l, mmin + 1):
                        p = x * a[i, k] + y * a[i, k + 1]
                        if k != nn - 1:
                            p += z * a[i, k + 2]
                            a[i, k + 2] -= p * r
                        a[i, k + 1] -= p * q
                        a[i, k] -= p
                k += 1
            if l >= nn - 1:
                pass
    return [complex(wr[i], wi[i]) for i in range(n)]


def eigenvalues(M) -> list[complex]:
    """Eigenvalues of a small dense real matrix, sorted by (real, imag)."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    n = M.shape[0]
    if M.shape != (n, n):
        raise ValueError(f"square matrix required, got {M.shape}")
    if n > 64:
        raise ValueError("eigenvalues() is meant for matrices up to 64x64")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    if n == 0:
        return []
    if n == 1:
        ev = [complex(M[0, 0])]
    elif n == 2:
        ev = _eig2(M[0, 0], M[0, 1], M[1, 0], M[1, 1])
    else:
        ev = _hqr(_hessenberg(M))
    return sorted(ev, key=lambda z: (z.real, z.imag))


def spectral_radius(M) -> float:
    ev = eigenvalues(M)
    return max((abs(z) for z in ev), default=0.0)


def is_schur(M, margin=0.0) -> bool:
    return spectral_radius(M) < 1.0 - margin
