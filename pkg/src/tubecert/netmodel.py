"""Networks of coupled LTI subsystems, their disturbance sets and scenario builders."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType

import numpy as np

from . import setcalc as sc
from .ctrl import StateSpace, dlqr, zoh_discretize

__all__ = [
    "ZERO_TOL",
    "ScenarioError",
    "Subsystem",
    "Network",
    "TruckChainParams",
    "DEFAULT_TRUCKS",
    "REFERENCE_GAINS",
    "assemble_global",
    "lqr_gains",
    "disturbance_set",
    "truck_chain_continuous",
    "truck_chain",
    "builtin_scenarios",
    "load_scenario",
    "scenario_from_dict",
]

ZERO_TOL = 1e-12


class ScenarioError(ValueError):
    """Invalid network description (bad dimensions, non-compact constraints...)."""


def _mat(x, rows=None, name="matrix"):
    M = np.asarray(x, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    elif M.ndim == 1:
        M = M.reshape(rows if rows is not None else 1, -1)
    if M.ndim != 2:
        raise ScenarioError(f"{name} must be 2-D")
    if not np.all(np.isfinite(M)):
        raise ScenarioError(f"{name} has non-finite entries")
    M = M.copy()
    M.setflags(write=False)
    return M


def _is_zero(M):
    return M.size == 0 or float(np.abs(M).max()) <= ZERO_TOL


@dataclass(frozen=True, eq=False)
class Subsystem:
    """One node of the network.

    ``couplings`` maps neighbour index j to the pair (A_ij, B_ij). Pairs whose
    blocks are both numerically zero are dropped, so the keys are exactly the
    neighbour set N_i.
    """

    index: int
    A: np.ndarray
    B: np.ndarray
    X: sc.HPolytope
    U: sc.HPolytope
    couplings: dict = field(default_factory=dict)

    def __post_init__(self):
        A = _mat(self.A, name=f"A_{self.index}{self.index}")
        n = A.shape[0]
        B = _mat(self.B, rows=n, name=f"B_{self.index}{self.index}")
        if A.shape != (n, n):
            raise ScenarioError(f"A_{self.index}{self.index} must be square")
        if B.shape[0] != n:
            raise ScenarioError(f"B_{self.index}{self.index} needs {n} rows")
        if self.X.dim != n:
            raise ScenarioError(f"X_{self.index} has dimension {self.X.dim}, expected {n}")
        if self.U.dim != B.shape[1]:
            raise ScenarioError(f"U_{self.index} has dimension {self.U.dim}, expected {B.shape[1]}")
        cpl = {}
        for j, (Aij, Bij) in sorted(self.couplings.items()):
            j = int(j)
            if j == self.index:
                raise ScenarioError(f"subsystem {self.index} lists itself as a neighbour")
            Aij = _mat(Aij, rows=n, name=f"A_{self.index}{j}")
            Bij = _mat(Bij, rows=n, name=f"B_{self.index}{j}")
            if Aij.shape[0] != n or Bij.shape[0] != n:
                raise ScenarioError(f"coupling ({self.index},{j}) needs {n} rows")
            if _is_zero(Aij) and _is_zero(Bij):
                continue
            cpl[j] = (Aij, Bij)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "couplings", MappingProxyType(cpl))

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def neighbours(self):
        return tuple(self.couplings)


@dataclass(frozen=True, eq=False)
class Network:
    subsystems: tuple
    name: str = ""
    gains: tuple | None = None
    lqr_weights: tuple | None = None  # (Q_diag list, R_diag list) per subsystem or shared

    def __post_init__(self):
        subs = tuple(self.subsystems)
        object.__setattr__(self, "subsystems", subs)
        M = len(subs)
        if M == 0:
            raise ScenarioError("network without subsystems")
        for k, s in enumerate(subs):
            if s.index != k:
                raise ScenarioError(f"subsystem at position {k} has index {s.index}")
            for j, (Aij, Bij) in s.couplings.items():
                if not 0 <= j < M:
                    raise ScenarioError(f"subsystem {k} couples to unknown subsystem {j}")
                if Aij.shape[1] != subs[j].n or Bij.shape[1] != subs[j].m:
                    raise ScenarioError(f"coupling ({k},{j}) has inconsistent column count")
        if self.gains is not None:
            gains = tuple(_mat(K, rows=subs[i].m, name=f"K_{i}") for i, K in enumerate(self.gains))
            if len(gains) != M:
                raise ScenarioError(f"{len(gains)} gains for {M} subsystems")
            for i, K in enumerate(gains):
                if K.shape != (subs[i].m, subs[i].n):
                    raise ScenarioError(f"K_{i} must be {subs[i].m}x{subs[i].n}, got {K.shape}")
            object.__setattr__(self, "gains", gains)

    def __len__(self):
        return len(self.subsystems)

    def __getitem__(self, i) -> Subsystem:
        return self.subsystems[i]

    @property
    def state_slices(self):
        out, k = [], 0
        for s in self.subsystems:
            out.append(slice(k, k + s.n))
            k += s.n
        return out

    @property
    def input_slices(self):
        out, k = [], 0
        for s in self.subsystems:
            out.append(slice(k, k + s.m))
            k += s.m
        return out

    def with_gains(self, gains) -> Network:
        return Network(self.subsystems, self.name, tuple(gains), self.lqr_weights)

    def validate_constraints(self):
        """Constraint sets must be bounded with the origin in their interior."""
        for s in self.subsystems:
            for lbl, S in (("X", s.X), ("U", s.U)):
                if not S.is_bounded:
                    raise ScenarioError(f"{lbl}_{s.index} is unbounded")
                if np.any(S.b <= 0):
                    raise ScenarioError(f"{lbl}_{s.index} does not contain the origin in its interior")

    def block_gain(self, gains=None) -> np.ndarray:
        gains = self.gains if gains is None else gains
        if gains is None:
            raise ScenarioError("no gains given and the network has no default gains")
        m = sum(s.m for s in self.subsystems)
        n = sum(s.n for s in self.subsystems)
        K = np.zeros((m, n))
        for Ki, rs, cs in zip(gains, self.input_slices, self.state_slices):
            K[rs, cs] = Ki
        return K


def assemble_global(net: Network) -> StateSpace:
    n = sum(s.n for s in net.subsystems)
    m = sum(s.m for s in net.subsystems)
    A = np.zeros((n, n))
    B = np.zeros((n, m))
    xs, us = net.state_slices, net.input_slices
    for s in net.subsystems:
        i = s.index
        A[xs[i], xs[i]] = s.A
        B[xs[i], us[i]] = s.B
        for j, (Aij, Bij) in s.couplings.items():
            A[xs[i], xs[j]] = Aij
            B[xs[i], us[j]] = Bij
    return StateSpace(A, B)


def lqr_gains(net: Network):
    """Local LQR gains K_i for (A_ii, B_ii) with the network's stage weights (identity by default)."""
    out = []
    for s in net.subsystems:
        Q, R = np.eye(s.n), np.eye(s.m)
        if net.lqr_weights is not None:
            qd, rd = net.lqr_weights
            if len(qd) == s.n and len(rd) == s.m:
                Q, R = np.diag(qd), np.diag(rd)
        out.append(dlqr(s.A, s.B, Q, R).K)
    return tuple(out)


def disturbance_set(net: Network, i: int):
    """W_i together with its per-neighbour summands W_ij = A_ij X_j + B_ij U_j."""
    s = net[i]
    parts = {}
    for j, (Aij, Bij) in s.couplings.items():
        terms = []
        if not _is_zero(Aij):
            terms.append(sc.linear_map(Aij, net[j].X))
        if not _is_zero(Bij):
            terms.append(sc.linear_map(Bij, net[j].U))
        parts[j] = sc.minkowski_sum(*terms)
    if not parts:
        return sc.point(np.zeros(s.n)), {}
    return sc.minkowski_sum(*parts.values()), parts


# ---------------------------------------------------------------------------
# truck chain


@dataclass(frozen=True)
class TruckChainParams:
    masses: tuple = (3.0, 2.0, 3.0, 6.0)
    springs: tuple = (7.5, 0.75, 1.0)
    dampers: tuple = (4.0, 0.25, 0.3)
    Ts: float = 0.1
    input_gain: float = 100.0
    discretization: str = "local"
    pos_bound: float = 2.0
    vel_bound: float = 8.0
    input_bound: float = 4.0
    state_scale: tuple = (1.0, 1.0, 1.0, 1.0)

    def __post_init__(self):
        M = len(self.masses)
        if len(self.springs) != M - 1 or len(self.dampers) != M - 1:
            raise ScenarioError("a chain of M trucks needs M-1 springs and M-1 dampers")
        if len(self.state_scale) != M:
            raise ScenarioError("state_scale needs one entry per truck")
        if min(self.masses) <= 0 or self.Ts <= 0 or self.input_gain <= 0:
            raise ScenarioError("masses, Ts and input_gain must be positive")
        if min(self.springs, default=0) < 0 or min(self.dampers, default=0) < 0:
            raise ScenarioError("springs and dampers must be non-negative")
        if self.discretization not in ("local", "global"):
            raise ScenarioError("discretization must be 'local' or 'global'")


DEFAULT_TRUCKS = TruckChainParams()

REFERENCE_GAINS = (
    ((-1.203, -0.283),),
    ((-0.949, -0.203),),
    ((-1.188, -0.303),),
    ((-1.612, -0.482),),
)


def truck_chain_continuous(p: TruckChainParams) -> StateSpace:
    """Continuous model with state (p_1, v_1, ..., p_M, v_M).

    m_i dv_i/dt = g u_i - sum over adjacent j of [k_ij (p_i - p_j) + c_ij (v_i - v_j)]
    where g is ``input_gain``.
    """
    M = len(p.masses)
    A = np.zeros((2 * M, 2 * M))
    B = np.zeros((2 * M, M))
    for i, mi in enumerate(p.masses):
        A[2 * i, 2 * i + 1] = 1.0
        B[2 * i + 1, i] = p.input_gain / mi
    for e, (k, c) in enumerate(zip(p.springs, p.dampers)):
        for a, b in ((e, e + 1), (e + 1, e)):
            ma = p.masses[a]
            A[2 * a + 1, 2 * a] -= k / ma
            A[2 * a + 1, 2 * a + 1] -= c / ma
            A[2 * a + 1, 2 * b] += k / ma
            A[2 * a + 1, 2 * b + 1] += c / ma
    return StateSpace(A, B)


def _truck_blocks(p: TruckChainParams):
    """Discrete (A, B) in the chain's global coordinates."""
    cont = truck_chain_continuous(p)
    M = len(p.masses)
    if p.discretization == "global":
        d = zoh_discretize(cont, p.Ts)
        return d.A, d.B
    # each truck sees its neighbours' states as inputs held over the sample
    A = np.zeros((2 * M, 2 * M))
    B = np.zeros((2 * M, M))
    for i in range(M):
        s = slice(2 * i, 2 * i + 2)
        nb = [j for j in (i - 1, i + 1) if 0 <= j < M]
        inp = np.hstack([cont.B[s, i:i + 1]] + [cont.A[s, 2 * j:2 * j + 2] for j in nb])
        d = zoh_discretize(StateSpace(cont.A[s, s], inp), p.Ts)
        A[s, s] = d.A
        B[s, i] = d.B[:, 0]
        for q, j in enumerate(nb):
            A[s, 2 * j:2 * j + 2] = d.B[:, 1 + 2 * q:3 + 2 * q]
    return A, B


def truck_chain(p: TruckChainParams = DEFAULT_TRUCKS, name="trucks", gains=None) -> Network:
    A, B = _truck_blocks(p)
    M = len(p.masses)
    subs = []
    for i in range(M):
        s = slice(2 * i, 2 * i + 2)
        sf = p.state_scale[i]
        X = sc.box([-p.pos_bound * sf, -p.vel_bound * sf], [p.pos_bound * sf, p.vel_bound * sf])
        U = sc.box([-p.input_bound], [p.input_bound])
        cpl = {}
        for j in range(M):
            if j == i:
                continue
            cpl[j] = (A[s, 2 * j:2 * j + 2], B[s, j:j + 1])
        subs.append(Subsystem(i, A[s, s], B[s, i:i + 1], X, U, cpl))
    return Network(tuple(subs), name, gains, ((1.0, 1.0), (1.0,)))


def _example1():
    X = sc.box([-1.0], [1.0])
    U = sc.box([-1.0], [1.0])
    s0 = Subsystem(0, [[1.0]], [[1.0]], X, U, {1: ([[0.0]], [[0.5]])})
    s1 = Subsystem(1, [[1.0]], [[1.0]], X, U, {0: ([[0.0]], [[0.5]])})
    return Network((s0, s1), "example1", (np.array([[-1.5]]), np.array([[-1.5]])))


def _case3():
    A = np.array([[2.070, 1.924], [0.316, 0.203]])
    B = np.array([[0.660, -1.274], [0.113, 0.810]])
    X = sc.box([-1.0], [1.0])
    U = sc.box([-1.0], [1.0])
    s0 = Subsystem(0, A[0:1, 0:1], B[0:1, 0:1], X, U, {1: (A[0:1, 1:2], B[0:1, 1:2])})
    s1 = Subsystem(1, A[1:2, 1:2], B[1:2, 1:2], X, U, {0: (A[1:2, 0:1], B[1:2, 0:1])})
    return Network((s0, s1), "case3", (np.array([[-2.924]]), np.array([[0.977]])))


def builtin_scenarios() -> dict:
    """Named networks with their default gains attached."""
    gains = tuple(np.array(K) for K in REFERENCE_GAINS)
    case2 = TruckChainParams(state_scale=(1.0, 3.0, 1.0, 1.0))
    return {
        "example1": _example1(),
        "case3": _case3(),
        "trucks-case1": truck_chain(DEFAULT_TRUCKS, "trucks-case1", gains),
        "trucks-case2": truck_chain(case2, "trucks-case2", gains),
    }


# ---------------------------------------------------------------------------
# scenario files


def _hpoly(d, what):
    try:
        return sc.HPolytope(d["A"], d["b"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"bad {what}: {exc}") from exc


def scenario_from_dict(doc: dict, name="scenario") -> Network:
    """Build a network from the JSON scenario schema (see docs/scenario_schema.md)."""
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a JSON object")
    name = doc.get("name", name)
    lqr = doc.get("lqr")
    weights = None
    if lqr is not None:
        try:
            weights = (tuple(float(v) for v in lqr["Q_diag"]), tuple(float(v) for v in lqr["R_diag"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"bad lqr block: {exc}") from exc
    gains = doc.get("gains")
    if "truck_chain" in doc:
        tc = dict(doc["truck_chain"])
        try:
            p = TruckChainParams(
                masses=tuple(map(float, tc.pop("masses"))),
                springs=tuple(map(float, tc.pop("springs"))),
                dampers=tuple(map(float, tc.pop("dampers"))),
                Ts=float(tc.pop("Ts", 0.1)),
                **{k: (tuple(v) if isinstance(v, list) else v) for k, v in tc.items()},
            )
        except (KeyError, TypeError) as exc:
            raise ScenarioError(f"bad truck_chain block: {exc}") from exc
        net = truck_chain(p, name)
    elif "subsystems" in doc:
        subs = []
        try:
            for i, d in enumerate(doc["subsystems"]):
                cpl = {int(j): (c["A"], c["B"]) for j, c in d.get("couplings", {}).items()}
                A = np.asarray(d["A"], dtype=float)
                n = A.shape[0] if A.ndim == 2 else 1
                subs.append(Subsystem(i, A, np.asarray(d["B"], dtype=float).reshape(n, -1),
                                      _hpoly(d["X"], f"X_{i}"), _hpoly(d["U"], f"U_{i}"), cpl))
        except (KeyError, TypeError) as exc:
            raise ScenarioError(f"bad subsystem entry: {exc}") from exc
        net = Network(tuple(subs), name)
    else:
        raise ScenarioError("scenario needs either 'subsystems' or 'truck_chain'")
    if gains is not None:
        net = net.with_gains([np.asarray(K, dtype=float) for K in gains])
    if weights is not None:
        net = Network(net.subsystems, net.name, net.gains, weights)
    net.validate_constraints()
    return net


def load_scenario(path) -> Network:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    return scenario_from_dict(doc, path.stem)
