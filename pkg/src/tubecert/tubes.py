"""Local tubes (RPI cross-sections), admissibility and the network certificate.

A tube for subsystem i is the set Z_i, robust positively invariant for the
local error dynamics z+ = F_ii z + w with w in W_i. If every subsystem owns a
constraint admissible tube, the product Z_1 x ... x Z_M is invariant for the
global closed loop, which forces the block-diagonal feedback to be
stabilizing. ``theorem2_certificate`` checks every link of that argument
numerically and reports each inclusion with its margin.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import setcalc as sc
from .ctrl import spectral_radius
from .netmodel import Network, assemble_global, disturbance_set

__all__ = [
    "NotSchurError",
    "SingletonDisturbanceError",
    "TruncationError",
    "CertificateInconsistency",
    "UnsupportedNetworkError",
    "Tube",
    "mrpi_approx",
    "check_rpi",
    "Admissibility",
    "tube_admissible",
    "SubsystemVerdict",
    "InclusionVerdict",
    "CertificateReport",
    "theorem2_certificate",
    "SquarePiResult",
    "square_box_pi_exists",
]

CERTIFIED = "CERTIFIED"
NOT_CERTIFIED = "NOT_CERTIFIED"


class NotSchurError(ValueError):
    pass


class SingletonDisturbanceError(ValueError):
    pass


class TruncationError(RuntimeError):
    def __init__(self, msg, alpha):
        super().__init__(msg)
        self.alpha = alpha


class CertificateInconsistency(AssertionError):
    """All tubes admissible but the global loop is not Schur: a bug, never a result."""


class UnsupportedNetworkError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Tube:
    """RPI set Z for z+ = F z + w, w in W, plus how it was built.

    ``s`` is the truncation order and ``alpha`` the contraction factor with
    F^s W inside alpha W. ``inflation`` is the width added to a flat W so
    that the contraction test has a full-dimensional reference set.
    """

    F: np.ndarray
    W: sc.ConvexSet
    Z: sc.ConvexSet
    s: int
    alpha: float
    eps: float
    inflation: float = 0.0
    index: int | None = None
    K: np.ndarray | None = None


def _complement_box(W: sc.ConvexSet, width: float):
    basis = W.span_basis()
    n = W.dim
    if basis.shape[1] == 0:
        comp = np.eye(n)
    else:
        U, _, _ = np.linalg.svd(basis, full_matrices=True)
        comp = U[:, basis.shape[1]:]
    return sc.Zonotope(np.zeros(n), width * comp)


def mrpi_approx(F, W: sc.ConvexSet, eps: float = 1e-3, s_max: int = 20000) -> Tube:
    """Outer approximation of the minimal RPI set of z+ = Fz + w, w in W.

    Returns Z = (1-alpha)^-1 (W + FW + ... + F^{s-1}W) with the smallest s
    such that F^s W is inside alpha W and alpha/(1-alpha) times the box
    radius of the partial sum is at most ``eps``. Z is RPI by construction
    and exceeds the minimal RPI set by at most ``eps`` in every coordinate
    support.

    A flat W (empty interior) is first thickened by a tiny box on the
    orthogonal complement of its span; the extra error is capped at ``eps``.
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    n = F.shape[0]
    if F.shape != (n, n) or W.dim != n:
        raise sc.DimensionError("F must be square and match the dimension of W")
    if eps <= 0:
        raise ValueError("eps must be positive")
    rho = spectral_radius(F)
    if rho >= 1.0:
        raise NotSchurError(f"closed loop has spectral radius {rho:.6g} >= 1; no bounded RPI set")
    if W.is_singleton():
        raise SingletonDisturbanceError("W is a single point; the invariant set would be a singleton")

    Wref = W
    eta = 0.0
    if W.span_basis().shape[1] < n:
        # sum of ||F^k||_inf bounds the growth of the added box through the series
        tot, Fk = 0.0, np.eye(n)
        for _ in range(10_000):
            nk = np.abs(Fk).sum(axis=1).max()
            tot += nk
            if nk < 1e-16:
                break
            Fk = F @ Fk
        eta = eps / tot
        Wref = sc.minkowski_sum(W, _complement_box(W, eta))

    D = sc.facet_normals(Wref)
    hW = Wref.support_many(D)
    if np.any(hW <= 0):
        raise ValueError("W must contain the origin in its relative interior")
    E = np.vstack([np.eye(n), -np.eye(n)])
    flat = Wref._flat
    partial = np.zeros(2 * n)  # supports of the partial sum along +-e_j
    Fk = np.eye(n)
    alpha = np.inf
    for s in range(1, s_max + 1):
        partial += flat.support_many(E @ Fk)
        Fk = F @ Fk
        alpha = float(np.max(flat.support_many(D @ Fk) / hW))
        alpha = max(alpha, 0.0)
        if alpha < 1.0 and alpha / (1.0 - alpha) * partial.max() <= eps:
            break
    else:
        raise TruncationError(f"no truncation order <= {s_max} met eps={eps:g} (alpha={alpha:.3g})", alpha)

    terms = []
    Fk = np.eye(n)
    for _ in range(s):
        terms.append(sc.linear_map(Fk, Wref))
        Fk = F @ Fk
    Zs = sc.minkowski_sum(*terms)
    Z = sc.Scaled(1.0 / (1.0 - alpha), Zs) if alpha > 0 else Zs
    return Tube(F, W, Z, s, alpha, eps, eta)


def check_rpi(F, W: sc.ConvexSet, Z: sc.ConvexSet, directions=None, tol=sc.DEFAULT_TOL):
    """Largest violation of h_Z(F'd) + h_W(d) <= h_Z(d) over test directions.

    Returns ``(residual, ok)``. Default directions are the facet normals of Z
    and W plus a fixed fan, which is exact in 1-D and 2-D.
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    if directions is None:
        directions = sc.test_directions(Z, W)
    D = np.atleast_2d(np.asarray(directions, dtype=float))
    r = Z.support_many(D @ F) + W.support_many(D) - Z.support_many(D)
    res = float(np.max(r))
    return res, res <= tol


@dataclass(frozen=True)
class Admissibility:
    ok: bool
    state_margin: float
    input_margin: float


def tube_admissible(tube: Tube, X: sc.HPolytope, U: sc.HPolytope, K=None, tol=sc.DEFAULT_TOL) -> Admissibility:
    """Strict inclusions Z in X and KZ in U, both with margin > tol."""
    K = tube.K if K is None else K
    if K is None:
        raise ValueError("tube has no gain attached; pass K")
    K = np.atleast_2d(np.asarray(K, dtype=float))
    sm = sc.contains(X, tube.Z, tol).margin
    im = sc.contains(U, sc.linear_map(K, tube.Z), tol).margin
    return Admissibility(bool(sm > tol and im > tol), sm, im)


# ---------------------------------------------------------------------------
# certificate


@dataclass
class SubsystemVerdict:
    index: int
    schur: bool
    rho_local: float
    admissible: bool
    state_margin: float | None = None
    input_margin: float | None = None
    rpi_residual: float | None = None
    truncation: int | None = None
    alpha: float | None = None
    note: str = ""


@dataclass
class InclusionVerdict:
    kind: str  # "V_ij in W_ij" or "local invariance"
    i: int
    j: int | None
    ok: bool
    margin: float


@dataclass
class CertificateReport:
    scenario: str
    eps: float
    tol: float
    subsystems: list
    proof_inclusions: list
    rho_global: float
    schur_global: bool
    product_pi_residual: float | None
    conclusion: str
    tubes: list = field(default_factory=list, repr=False)

    @property
    def certified(self):
        return self.conclusion == CERTIFIED

    def to_dict(self):
        return {
            "scenario": self.scenario,
            "conclusion": self.conclusion,
            "eps": self.eps,
            "tol": self.tol,
            "global": {"rho": self.rho_global, "schur": self.schur_global,
                       "product_pi_residual": self.product_pi_residual},
            "subsystems": [asdict(v) for v in self.subsystems],
            "proof_inclusions": [asdict(v) for v in self.proof_inclusions],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self):
        lines = [f"scenario: {self.scenario}", f"conclusion: {self.conclusion}",
                 f"rho(A+BK) = {self.rho_global:.6f} ({'Schur' if self.schur_global else 'not Schur'})",
                 f"eps = {self.eps:g}, tol = {self.tol:g}", ""]
        for v in self.subsystems:
            flag = "admissible" if v.admissible else "NOT admissible"
            sm = "n/a" if v.state_margin is None else f"{v.state_margin:+.6f}"
            im = "n/a" if v.input_margin is None else f"{v.input_margin:+.6f}"
            lines.append(f"subsystem {v.index}: {flag}; rho(F_ii)={v.rho_local:.6f} "
                         f"state margin {sm}, input margin {im}"
                         + (f" [{v.note}]" if v.note else ""))
        if self.proof_inclusions:
            lines.append("")
            for p in self.proof_inclusions:
                tag = f"({p.i},{p.j})" if p.j is not None else f"({p.i})"
                lines.append(f"{p.kind} {tag}: {'ok' if p.ok else 'FAILS'} (margin {p.margin:+.3e})")
        if self.product_pi_residual is not None:
            lines.append(f"product set invariance residual: {self.product_pi_residual:+.3e}")
        return "\n".join(lines) + "\n"


def _local_tube(net: Network, i: int, K, eps, tol):
    s = net[i]
    F = s.A + s.B @ K
    rho = spectral_radius(F)
    W, parts = disturbance_set(net, i)
    if rho >= 1.0:
        return SubsystemVerdict(i, False, rho, False, note="F_ii not Schur"), None, parts
    if not parts:
        # no neighbours: the tube collapses to the origin
        Z = sc.point(np.zeros(s.n))
        tube = Tube(F, W, Z, 0, 0.0, eps, 0.0, i, K)
        sm = s.X.point_margin(np.zeros(s.n))
        im = s.U.point_margin(np.zeros(s.m))
        return (SubsystemVerdict(i, True, rho, sm > tol and im > tol, sm, im, 0.0, 0, 0.0,
                                 note="no neighbours"), tube, parts)
    try:
        t = mrpi_approx(F, W, eps)
    except (TruncationError, SingletonDisturbanceError, ValueError) as exc:
        return SubsystemVerdict(i, True, rho, False, note=str(exc)), None, parts
    tube = Tube(t.F, t.W, t.Z, t.s, t.alpha, t.eps, t.inflation, i, K)
    res, _ = check_rpi(F, W, tube.Z, tol=tol)
    adm = tube_admissible(tube, s.X, s.U, K, tol)
    return (SubsystemVerdict(i, True, rho, adm.ok and res <= tol, adm.state_margin, adm.input_margin,
                             res, t.s, t.alpha), tube, parts)


def _inclusion_margin(inner: sc.ConvexSet, outer: sc.ConvexSet):
    D = sc.test_directions(outer, inner)
    return float(np.min(outer.support_many(D) - inner.support_many(D)))


def theorem2_certificate(net: Network, gains=None, eps=1e-3, tol=sc.DEFAULT_TOL, workers=None) -> CertificateReport:
    """Check constraint admissible tubes for every subsystem and corroborate globally.

    ``workers`` > 1 computes the local tubes on a thread pool; the report is
    identical either way.
    """
    gains = net.gains if gains is None else tuple(np.atleast_2d(np.asarray(K, dtype=float)) for K in gains)
    if gains is None:
        raise ValueError("no gains supplied and the network carries none")
    M = len(net)
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            futs = [ex.submit(_local_tube, net, i, gains[i], eps, tol) for i in range(M)]
            results = [f.result() for f in futs]
    else:
        results = [_local_tube(net, i, gains[i], eps, tol) for i in range(M)]
    verdicts = [r[0] for r in results]
    tubes = [r[1] for r in results]

    incl = []
    if all(t is not None for t in tubes):
        for i in range(M):
            s = net[i]
            parts = results[i][2]
            cross = []
            for j, (Aij, Bij) in s.couplings.items():
                Fij = Aij + Bij @ gains[j]
                V = sc.linear_map(Fij, tubes[j].Z)
                cross.append(V)
                mg = _inclusion_margin(V, parts[j])
                incl.append(InclusionVerdict("V_ij in W_ij", i, j, mg >= -tol, mg))
            lhs = sc.minkowski_sum(sc.linear_map(tubes[i].F, tubes[i].Z), *cross)
            D = sc.test_directions(tubes[i].Z)
            mg = float(np.min(tubes[i].Z.support_many(D) - lhs.support_many(D)))
            incl.append(InclusionVerdict("local invariance", i, None, mg >= -tol, mg))

    g = assemble_global(net)
    Fg = g.A + g.B @ net.block_gain(gains)
    rho = spectral_radius(Fg)
    certified = all(v.admissible for v in verdicts)
    ppi = None
    if certified:
        ppi = _product_pi_residual(net, Fg, [t.Z for t in tubes])
        if rho >= 1.0:
            raise CertificateInconsistency(
                f"every tube is admissible but rho(A+BK) = {rho:.6g}; check tolerances and set arithmetic")
    return CertificateReport(net.name, eps, tol, verdicts, incl, rho, rho < 1.0, ppi,
                             CERTIFIED if certified else NOT_CERTIFIED, tubes)


def _product_pi_residual(net, Fg, Zs):
    """max over lifted facet normals of h_{FZ}(d) - h_Z(d) for Z = Z_1 x ... x Z_M."""
    xs = net.state_slices
    worst = -np.inf
    for i, Zi in enumerate(Zs):
        D = sc.test_directions(Zi)
        lhs = np.zeros(len(D))
        for j, Zj in enumerate(Zs):
            Fij = Fg[xs[i], xs[j]]
            if np.any(Fij):
                lhs += Zj.support_many(D @ Fij)
        worst = max(worst, float(np.max(lhs - Zi.support_many(D))))
    return worst


# ---------------------------------------------------------------------------
# square PI sets for scalar subsystems


@dataclass(frozen=True)
class SquarePiResult:
    exists: bool
    rho_abs: float
    half_widths: tuple | None


def square_box_pi_exists(F=None, net: Network | None = None, gains=None) -> SquarePiResult:
    """Does a symmetric box [-a, a] (a > 0) satisfy F box inside box?

    F [-a,a] lies in [-a,a] iff |F| a <= a componentwise, which by
    Perron-Frobenius has a positive solution iff rho(|F|) <= 1. Only
    networks of scalar subsystems are supported.
    """
    if net is not None:
        bad = [s.index for s in net.subsystems if s.n != 1]
        if bad:
            raise UnsupportedNetworkError(
                f"square PI test needs scalar subsystems; subsystems {bad} have n_i > 1")
        g = assemble_global(net)
        F = g.A + g.B @ net.block_gain(gains)
    if F is None:
        raise ValueError("pass F or a network")
    F = np.atleast_2d(np.asarray(F, dtype=float))
    Fa = np.abs(F)
    r = spectral_radius(Fa)
    if r < 1.0:
        a = np.linalg.solve(np.eye(len(Fa)) - Fa, np.ones(len(Fa)))
        return SquarePiResult(True, r, tuple(float(v) for v in a))
    if r <= 1.0 + 1e-12:
        _, _, Vt = np.linalg.svd(Fa - np.eye(len(Fa)))
        v = np.abs(Vt[-1])
        return SquarePiResult(True, r, tuple(float(x) for x in v / v.max()))
    return SquarePiResult(False, r, None)
