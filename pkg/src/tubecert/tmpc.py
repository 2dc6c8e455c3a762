"""Decentralized tube MPC and closed-loop simulation of a network.

Each subsystem i runs its own controller with no information about its
neighbours. It plans a nominal trajectory (x^, u^) for the uncoupled model
x^+ = A_ii x^ + B_ii u^ inside tightened constraints, and applies

    u = u^_0 + K_i (x - x^_0),

so that the deviation x - x^ stays in the RPI set Z_i whatever the neighbours
do (as long as they respect their own constraints).
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from . import _kernels
from . import setcalc as sc
from .ctrl import dlqr, spectral_radius
from .netmodel import Network, assemble_global
from .qp import chol_inverse, kkt_residuals
from .tubes import Tube, mrpi_approx
from .netmodel import disturbance_set

__all__ = [
    "MODES",
    "TubeInadmissibleError",
    "TerminalSet",
    "OcpSpec",
    "OcpSolution",
    "LocalTubeMpc",
    "SimTrace",
    "tighten",
    "terminal_set",
    "build_controllers",
    "solve_ocp",
    "control_policy",
    "simulate",
    "sample_initial_state",
]

MODES = ("linear", "tmpc", "tmpc-propagate")
MAX_TMPC_DIM = 3


class TubeInadmissibleError(ValueError):
    pass


def tighten(X: sc.HPolytope, U: sc.HPolytope, Z: sc.ConvexSet, K):
    """(X minus Z, U minus K Z), the largest admissible tightening."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    Xh = sc.pontryagin_diff(X, Z)
    Uh = sc.pontryagin_diff(U, sc.linear_map(K, Z))
    if Xh.is_empty or Uh.is_empty:
        raise TubeInadmissibleError("tightened state or input set is empty")
    return Xh, Uh


@dataclass(frozen=True, eq=False)
class TerminalSet:
    set: sc.HPolytope
    iterations: int
    certified: bool


def _normalise(A, b):
    nrm = np.linalg.norm(A, axis=1)
    keep = nrm > 1e-14 * max(1.0, float(nrm.max(initial=0.0)))
    if np.any(b[~keep] < 0):
        raise ValueError("constraint 0'x <= b with b < 0: empty set")
    return A[keep] / nrm[keep, None], b[keep] / nrm[keep]


def _lp_max(c, A, b):
    res = linprog(-c, A_ub=A, b_ub=b, bounds=[(None, None)] * len(c), method="highs")
    if res.status != 0:
        return np.inf
    return -res.fun


def terminal_set(A, B, Kf, Xh: sc.HPolytope, Uh: sc.HPolytope, iter_cap=200) -> TerminalSet:
    """Maximal PI set of x+ = (A + B Kf) x inside {x in Xh, Kf x in Uh}.

    Rows C F^k x <= d are added until none of them cuts the current set
    (Gilbert-Tan), then redundant rows are dropped.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    Kf = np.atleast_2d(np.asarray(Kf, dtype=float))
    F = A + B @ Kf
    if spectral_radius(F) >= 1:
        raise ValueError("terminal controller is not stabilizing")
    C = np.vstack([Xh.A, Uh.A @ Kf])
    d = np.concatenate([Xh.b, Uh.b])
    C, d = _normalise(C, d)
    if np.any(d <= 0):
        raise ValueError("origin must be interior to the tightened constraints")
    Ac, bc = C.copy(), d.copy()
    Fk = np.eye(F.shape[0])
    certified = False
    it = 0
    for it in range(1, iter_cap + 1):
        Fk = F @ Fk
        new = C @ Fk
        redundant = True
        for r, dr in zip(new, d):
            if np.linalg.norm(r) < 1e-14:
                continue
            if _lp_max(r, Ac, bc) > dr + 1e-10 * (1.0 + abs(dr)):
                redundant = False
                break
        if redundant:
            certified = True
            break
        An, bn = _normalise(new, d)
        Ac = np.vstack([Ac, An])
        bc = np.concatenate([bc, bn])
    P = sc.HPolytope(Ac, bc).minimal()
    return TerminalSet(P, it, certified)


@dataclass(frozen=True, eq=False)
class OcpSpec:
    """Everything a local controller needs; the QP matrices are precomputed."""

    index: int
    N: int
    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    P: np.ndarray
    K: np.ndarray
    Kf: np.ndarray
    tube: Tube
    Zh: sc.HPolytope
    Xh: sc.HPolytope
    Uh: sc.HPolytope
    Xf: TerminalSet

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]


@dataclass(frozen=True)
class OcpSolution:
    status: str
    xhat0: np.ndarray
    uhat: np.ndarray  # (N, m)
    value: float
    kkt: float
    iterations: int

    @property
    def ok(self):
        return self.status == "optimal"


def _prediction(A, B, N):
    """Phi_k with x^_k = Phi_k @ [x^_0, u_0, ..., u_{N-1}]."""
    n, m = B.shape
    nz = n + N * m
    Phi = np.zeros((N + 1, n, nz))
    Phi[0, :, :n] = np.eye(n)
    for k in range(N):
        Phi[k + 1] = A @ Phi[k]
        Phi[k + 1, :, n + k * m:n + (k + 1) * m] += B
    return Phi


class LocalTubeMpc:
    """Condensed QP in z = [x^_0, u^_0 .. u^_{N-1}] for one subsystem.

    ``solve(x)`` optimises x^_0 under x - x^_0 in Z; ``solve(x, xhat0=...)``
    keeps the nominal state fixed (independent nominal evolution).
    """

    def __init__(self, spec: OcpSpec, tol=1e-10):
        self.spec = spec
        self.tol = tol
        A, B, N = spec.A, spec.B, spec.N
        n, m = B.shape
        self.n, self.m, self.N = n, m, N
        Phi = _prediction(A, B, N)
        nz = n + N * m
        H = np.zeros((nz, nz))
        for k in range(N):
            H += Phi[k].T @ spec.Q @ Phi[k]
        H += Phi[N].T @ spec.P @ Phi[N]
        for k in range(N):
            sl = slice(n + k * m, n + (k + 1) * m)
            H[sl, sl] += spec.R
        H = 2.0 * (H + H.T) / 2.0
        self.H = H
        self.Hinv = chol_inverse(H)
        rows, rhs = [], []
        for k in range(N):
            rows.append(spec.Xh.A @ Phi[k])
            rhs.append(spec.Xh.b)
            Su = np.zeros((m, nz))
            Su[:, n + k * m:n + (k + 1) * m] = np.eye(m)
            rows.append(spec.Uh.A @ Su)
            rhs.append(spec.Uh.b)
        rows.append(spec.Xf.set.A @ Phi[N])
        rhs.append(spec.Xf.set.b)
        Ast = np.vstack(rows)
        bst = np.concatenate(rhs)
        # constraint (x - x^_0) in Z, i.e. -Hz x^_0 <= hz - Hz x
        Hz = spec.Zh.A
        Atube = np.zeros((Hz.shape[0], nz))
        Atube[:, :n] = -Hz
        self._Hz, self._hz = Hz, spec.Zh.b
        self.A_free = np.ascontiguousarray(np.vstack([Atube, Ast]))
        self._b_free = np.concatenate([np.zeros(Hz.shape[0]), bst])
        self._ntube = Hz.shape[0]
        # fixed nominal state: only the inputs remain
        self.Huu = np.ascontiguousarray(H[n:, n:])
        self.Hu0 = H[n:, :n]
        self.Huu_inv = chol_inverse(self.Huu) if N * m else np.zeros((0, 0))
        self.A_u = np.ascontiguousarray(Ast[:, n:])
        self.A_0 = Ast[:, :n]
        self.b_st = bst
        self.max_iter = 50 * (self.A_free.shape[0] + nz + 10)

    def solve(self, x, xhat0=None) -> OcpSolution:
        x = np.asarray(x, dtype=float)
        n, m, N = self.n, self.m, self.N
        if xhat0 is None:
            b = self._b_free.copy()
            b[: self._ntube] = self._hz - self._Hz @ x
            z, lam, _, it, code = _kernels.qp_ineq(self.Hinv, np.zeros(n + N * m), self.A_free, b,
                                                   self.tol, self.max_iter)
            st, pr, du, co = kkt_residuals(self.H, np.zeros(n + N * m), self.A_free, b, z, lam)
            value = float(0.5 * z @ self.H @ z)
            xh, u = z[:n], z[n:]
        else:
            xh = np.asarray(xhat0, dtype=float)
            f = self.Hu0 @ xh
            b = self.b_st - self.A_0 @ xh
            u0 = -self.Huu_inv @ f
            u, lam, _, it, code = _kernels.qp_ineq(self.Huu_inv, u0, self.A_u, b, self.tol, self.max_iter)
            st, pr, du, co = kkt_residuals(self.Huu, f, self.A_u, b, u, lam)
            H = self.H
            value = float(0.5 * (u @ self.Huu @ u) + f @ u + 0.5 * xh @ H[:n, :n] @ xh)
        status = {0: "optimal", 1: "infeasible", 2: "max_iter", 3: "numerical"}[code]
        return OcpSolution(status, xh.copy(), u.reshape(N, m), value, max(st, pr, du, co), it)


def _stage_weights(net: Network, i):
    s = net[i]
    if net.lqr_weights is not None:
        qd, rd = net.lqr_weights
        if len(qd) == s.n and len(rd) == s.m:
            return np.diag(qd), np.diag(rd)
    return np.eye(s.n), np.eye(s.m)


def build_controllers(net: Network, gains=None, N=10, eps=1e-3, Q=None, R=None, workers=None):
    """One LocalTubeMpc per subsystem: tube, tightening, terminal ingredients."""
    gains = net.gains if gains is None else gains
    if gains is None:
        raise ValueError("network has no gains; pass them explicitly")
    if N < 1:
        raise ValueError("horizon must be >= 1")

    def build(i):
        s = net[i]
        if s.n > MAX_TMPC_DIM:
            raise ValueError(f"tube MPC supports subsystem state dimension <= {MAX_TMPC_DIM}")
        K = np.atleast_2d(np.asarray(gains[i], dtype=float))
        Qi, Ri = _stage_weights(net, i)
        Qi = Qi if Q is None else np.atleast_2d(Q)
        Ri = Ri if R is None else np.atleast_2d(R)
        W, parts = disturbance_set(net, i)
        F = s.A + s.B @ K
        if parts:
            t = mrpi_approx(F, W, eps)
            tube = Tube(t.F, t.W, t.Z, t.s, t.alpha, t.eps, t.inflation, i, K)
            Zh = sc.hrep(tube.Z)
        else:
            tube = Tube(F, W, sc.point(np.zeros(s.n)), 0, 0.0, eps, 0.0, i, K)
            Zh = sc.HPolytope(np.vstack([np.eye(s.n), -np.eye(s.n)]), np.zeros(2 * s.n))
        Xh, Uh = tighten(s.X, s.U, tube.Z, K)
        lqr = dlqr(s.A, s.B, Qi, Ri)
        Xf = terminal_set(s.A, s.B, lqr.K, Xh, Uh)
        spec = OcpSpec(i, N, s.A, s.B, Qi, Ri, lqr.P, K, lqr.K, tube, Zh, Xh, Uh, Xf)
        return LocalTubeMpc(spec)

    idx = range(len(net))
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(build, idx))
    return [build(i) for i in idx]


def solve_ocp(x, ctl: LocalTubeMpc, xhat0=None) -> OcpSolution:
    return ctl.solve(x, xhat0)


def control_policy(x, xhat, uhat, K):
    K = np.atleast_2d(np.asarray(K, dtype=float))
    return np.asarray(uhat, dtype=float) + K @ (np.asarray(x, dtype=float) - np.asarray(xhat, dtype=float))


# ---------------------------------------------------------------------------
# simulation


@dataclass
class SimTrace:
    mode: str
    scenario: str
    T: int
    x: list = field(default_factory=list)  # x[t][i]
    u: list = field(default_factory=list)
    xhat: list = field(default_factory=list)
    uhat: list = field(default_factory=list)
    w: list = field(default_factory=list)
    in_tube: list = field(default_factory=list)
    in_X: list = field(default_factory=list)
    in_U: list = field(default_factory=list)
    qp_status: list = field(default_factory=list)
    value: list = field(default_factory=list)
    kkt: list = field(default_factory=list)
    halted: dict | None = None
    meta: dict = field(default_factory=dict)

    @property
    def steps(self):
        return len(self.u)

    def all_flags(self):
        flags = [f for row in (self.in_tube + self.in_X + self.in_U) for f in row]
        return all(flags) and self.halted is None

    def to_csv(self) -> str:
        M = len(self.x[0])
        nmax = max(len(v) for v in self.x[0])
        mmax = max(len(v) for v in self.u[0]) if self.u else 1
        head = (["t", "i"] + [f"x{k}" for k in range(nmax)] + [f"u{k}" for k in range(mmax)]
                + [f"xhat{k}" for k in range(nmax)] + [f"uhat{k}" for k in range(mmax)]
                + [f"w{k}" for k in range(nmax)] + ["in_tube", "in_X", "in_U", "qp_status"])
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(head)

        def pad(v, k):
            vals = [repr(float(a)) for a in v]
            return vals + [""] * (k - len(vals))

        for t in range(len(self.x)):
            for i in range(M):
                has_u = t < len(self.u)
                row = [t, i] + pad(self.x[t][i], nmax)
                row += pad(self.u[t][i], mmax) if has_u else [""] * mmax
                row += pad(self.xhat[t][i], nmax) if has_u else [""] * nmax
                row += pad(self.uhat[t][i], mmax) if has_u else [""] * mmax
                row += pad(self.w[t][i], nmax) if has_u else [""] * nmax
                row += [int(self.in_tube[t][i]) if t < len(self.in_tube) else "",
                        int(self.in_X[t][i]),
                        int(self.in_U[t][i]) if has_u else "",
                        self.qp_status[t][i] if t < len(self.qp_status) else ""]
                wr.writerow(row)
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "scenario": self.scenario,
            "mode": self.mode,
            "T": self.T,
            "steps": self.steps,
            "halted": self.halted,
            "all_in_tube": all(all(r) for r in self.in_tube),
            "all_in_X": all(all(r) for r in self.in_X),
            "all_in_U": all(all(r) for r in self.in_U),
            "max_kkt": max((max(r) for r in self.kkt), default=0.0),
            **self.meta,
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"


def sample_initial_state(net: Network, mode, rng, controllers=None, gains=None, eps=1e-3, max_tries=1000):
    """A reproducible random start for ``simulate``.

    Linear mode draws each x_i from its tube Z_i. The MPC modes draw from
    X_i and keep the first draw for which every local problem is feasible.
    """
    if mode == "linear":
        gains = net.gains if gains is None else gains
        out = []
        for i, s in enumerate(net.subsystems):
            W, parts = disturbance_set(net, i)
            if not parts:
                out.append(np.zeros(s.n))
                continue
            t = mrpi_approx(s.A + s.B @ gains[i], W, eps)
            out.append(sc.sample(t.Z, rng))
        return out
    out = []
    for i, s in enumerate(net.subsystems):
        lo = -s.X.support_many(-np.eye(s.n))
        hi = s.X.support_many(np.eye(s.n))
        for _ in range(max_tries):
            x = rng.uniform(lo, hi)
            if s.X.contains_point(x, 0.0) and controllers[i].solve(x).ok:
                out.append(x)
                break
        else:
            raise RuntimeError(f"no feasible initial state found for subsystem {i}")
    return out


def simulate(net: Network, mode: str, x0, T: int, controllers=None, gains=None, tol=1e-7,
             workers=None) -> SimTrace:
    """Roll out the coupled plant under decentralized controllers.

    ``mode`` is one of ``linear`` (u_i = K_i x_i), ``tmpc`` (nominal state
    re-optimised every step) or ``tmpc-propagate`` (nominal state optimised
    at t = 0 only, then propagated with the nominal model).
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if T < 1:
        raise ValueError("T must be >= 1")
    M = len(net)
    g = assemble_global(net)
    xs, us = net.state_slices, net.input_slices
    x = np.concatenate([np.asarray(v, dtype=float).reshape(-1) for v in x0])
    if x.size != g.n:
        raise ValueError("initial state has the wrong size")
    if mode == "linear":
        gains = net.gains if gains is None else gains
        if gains is None:
            raise ValueError("linear mode needs gains")
        gains = [np.atleast_2d(np.asarray(K, dtype=float)) for K in gains]
        zsets = None
    else:
        if controllers is None:
            raise ValueError(f"mode {mode!r} needs controllers (see build_controllers)")
        gains = [c.spec.K for c in controllers]
    tr = SimTrace(mode, net.name, T)
    tr.meta["tol"] = tol
    prev = [None] * M  # nominal (x^, u^ sequence) for the propagate variant

    def local_step(i, xi, t):
        if mode == "linear":
            zero_u = np.zeros(net[i].m)
            return "n/a", np.zeros(net[i].n), zero_u, gains[i] @ xi, 0.0, 0.0
        ctl = controllers[i]
        if mode == "tmpc-propagate" and t > 0:
            pxh, pu = prev[i]
            xh_fixed = ctl.spec.A @ pxh + ctl.spec.B @ pu[0]
            sol = ctl.solve(xi, xhat0=xh_fixed)
        else:
            sol = ctl.solve(xi)
        if not sol.ok:
            return sol.status, None, None, None, sol.value, sol.kkt
        u = control_policy(xi, sol.xhat0, sol.uhat[0], ctl.spec.K)
        return sol.status, sol.xhat0, sol.uhat[0], u, sol.value, sol.kkt, sol.uhat

    pool = ThreadPoolExecutor(max_workers=workers) if workers and workers > 1 else None
    try:
        for t in range(T + 1):
            xl = [x[xs[i]] for i in range(M)]
            tr.x.append([v.copy() for v in xl])
            tr.in_X.append([net[i].X.contains_point(xl[i], tol) for i in range(M)])
            if t == T:
                break
            if pool is not None:
                res = list(pool.map(lambda i: local_step(i, xl[i], t), range(M)))
            else:
                res = [local_step(i, xl[i], t) for i in range(M)]
            status = [r[0] for r in res]
            tr.qp_status.append(status)
            bad = [i for i, r in enumerate(res) if r[3] is None]
            if bad:
                tr.halted = {"t": t, "subsystem": bad[0], "status": status[bad[0]]}
                tr.in_tube.append([True if r[3] is not None else False for r in res])
                break
            u = np.concatenate([r[3] for r in res])
            tr.xhat.append([r[1] for r in res])
            tr.uhat.append([r[2] for r in res])
            tr.u.append([r[3] for r in res])
            tr.value.append([r[4] for r in res])
            tr.kkt.append([r[5] for r in res])
            if mode == "linear":
                if zsets is None:
                    zsets = _linear_tubes(net, gains)
                tr.in_tube.append([zsets[i] is None or zsets[i].contains_point(xl[i], tol) for i in range(M)])
            else:
                tr.in_tube.append([controllers[i].spec.Zh.contains_point(xl[i] - res[i][1], tol)
                                   for i in range(M)])
                for i in range(M):
                    prev[i] = (res[i][1], res[i][6])
            tr.in_U.append([net[i].U.contains_point(u[us[i]], tol) for i in range(M)])
            xn = g.A @ x + g.B @ u
            # realized coupling: what the neighbours injected into each subsystem
            tr.w.append([xn[xs[i]] - net[i].A @ xl[i] - net[i].B @ u[us[i]] for i in range(M)])
            x = xn
    finally:
        if pool is not None:
            pool.shutdown()
    return tr


def _linear_tubes(net, gains, eps=1e-3):
    out = []
    for i, s in enumerate(net.subsystems):
        W, parts = disturbance_set(net, i)
        F = s.A + s.B @ gains[i]
        if not parts or spectral_radius(F) >= 1 or s.n > MAX_TMPC_DIM:
            out.append(None)
            continue
        out.append(sc.hrep(mrpi_approx(F, W, eps).Z))
    return out
