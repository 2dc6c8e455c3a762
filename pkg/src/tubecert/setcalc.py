"""Compact convex sets evaluated through their support functions.

Sets are immutable expression trees: polytope and zonotope atoms combined by
Minkowski sums, non-negative scalings and linear maps. Nothing is ever
converted to an explicit H- or V-representation unless asked for; every
inclusion test reduces to support-function evaluations

    h_S(d) = max_{x in S} <x, d>.

Explicit polygons are produced only in 2-D (``vertices_2d``), where the sum
of polygons is exact through a merge of normal fans.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.optimize import linprog

from . import _kernels

DEFAULT_TOL = 1e-8

__all__ = [
    "DEFAULT_TOL",
    "ConvexSet",
    "HPolytope",
    "VPolytope",
    "Zonotope",
    "Scaled",
    "LinearMap",
    "MinkowskiSum",
    "Containment",
    "DimensionError",
    "UnboundedSetError",
    "box",
    "point",
    "support",
    "minkowski_sum",
    "linear_map",
    "pontryagin_diff",
    "contains",
    "vertices_2d",
    "hrep",
    "sample",
    "facet_normals",
    "direction_fan",
    "test_directions",
    "write_vertex_csv",
    "svg_polygons",
]


class DimensionError(ValueError):
    pass


class UnboundedSetError(ValueError):
    pass


def _as_dirs(D, dim):
    D = np.asarray(D, dtype=float)
    if D.ndim == 1:
        D = D[None, :]
    if D.shape[1] != dim:
        raise DimensionError(f"direction of dimension {D.shape[1]} for a set of dimension {dim}")
    return np.ascontiguousarray(D)


class _Flat:
    """Sum-of-atoms normal form: c + G[-1,1]^p + sum(V-polys) + sum(M_k H_k)."""

    __slots__ = ("c", "G", "vpolys", "hmaps")

    def __init__(self, c, G, vpolys=(), hmaps=()):
        self.c = c
        self.G = G
        self.vpolys = list(vpolys)
        self.hmaps = list(hmaps)

    def support_many(self, D):
        h = D @ self.c
        if self.G.shape[1]:
            h = h + _kernels.zonotope_support(D, self.G)
        for V in self.vpolys:
            h = h + (D @ V.T).max(axis=1)
        for M, H in self.hmaps:
            h = h + H.support_many(D @ M)
        return h


class ConvexSet:
    """Base node of a set expression. Subclasses are immutable."""

    dim: int

    def support(self, d) -> float:
        return float(self.support_many(d)[0])

    def support_many(self, D) -> np.ndarray:
        D = _as_dirs(D, self.dim)
        return self._flat.support_many(D)

    @cached_property
    def _flat(self) -> _Flat:
        raise NotImplementedError

    def __add__(self, other):
        return minkowski_sum(self, other)

    def __rmatmul__(self, M):
        return linear_map(M, self)

    def __mul__(self, alpha):
        return Scaled(alpha, self)

    __rmul__ = __mul__

    # numpy must defer to __rmatmul__ instead of broadcasting over the set
    __array_ufunc__ = None

    def width(self, d) -> float:
        return self.support(d) + self.support(-np.asarray(d, dtype=float))

    def is_singleton(self, tol=1e-12) -> bool:
        fan = direction_fan(self.dim)
        D = np.vstack([fan, -fan])
        h = self.support_many(D)
        w = h[: len(fan)] + h[len(fan):]
        return bool(np.all(w <= tol * (1.0 + np.abs(h).max())))

    def span_basis(self, tol=1e-10):
        """Orthonormal basis of the linear span of ``S - S`` (its affine hull direction)."""
        f = self._flat
        cols = [f.G]
        for V in f.vpolys:
            cols.append((V - V[0]).T)
        if f.hmaps:
            # H atoms are full-dimensional by construction; their maps decide
            cols.extend(M for M, _ in f.hmaps)
        A = np.hstack(cols) if cols else np.zeros((self.dim, 0))
        if A.shape[1] == 0:
            return np.zeros((self.dim, 0))
        U, s, _ = np.linalg.svd(A, full_matrices=True)
        rank = int(np.sum(s > tol * max(1.0, s[0] if s.size else 0.0)))
        return U[:, :rank]


class HPolytope(ConvexSet):
    """{x | A x <= b}. Constraint sets live here."""

    def __init__(self, A, b):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float).reshape(-1)
        if A.shape[0] != b.shape[0]:
            raise DimensionError(f"A has {A.shape[0]} rows but b has {b.shape[0]} entries")
        if np.any(np.all(A == 0.0, axis=1)):
            raise ValueError("every row of A must be nonzero")
        A.setflags(write=False)
        b.setflags(write=False)
        self.A = A
        self.b = b
        self.dim = A.shape[1]

    def __repr__(self):
        return f"HPolytope(dim={self.dim}, facets={self.A.shape[0]})"

    @cached_property
    def box_bounds(self):
        """(lo, hi) if this is an axis-aligned box with unit rows, else None."""
        n = self.dim
        lo = np.full(n, -np.inf)
        hi = np.full(n, np.inf)
        for a, bk in zip(self.A, self.b):
            nz = np.flatnonzero(a)
            if nz.size != 1:
                return None
            j = nz[0]
            s = a[j]
            if s > 0:
                hi[j] = min(hi[j], bk / s)
            else:
                lo[j] = max(lo[j], bk / s)
        if np.any(~np.isfinite(lo)) or np.any(~np.isfinite(hi)):
            return None
        return lo, hi

    def is_box(self) -> bool:
        return self.box_bounds is not None

    @cached_property
    def vertices(self) -> np.ndarray:
        """Vertex enumeration by brute-force facet intersection (dim <= 3)."""
        n = self.dim
        if n > 3:
            raise DimensionError("vertex enumeration is only provided up to dimension 3")
        if not self.is_bounded:
            raise UnboundedSetError("unbounded H-polytope")
        A, b = self.A, self.b
        scale = 1.0 + np.abs(b)
        pts = []
        for idx in itertools.combinations(range(A.shape[0]), n):
            Ai = A[list(idx)]
            if abs(np.linalg.det(Ai)) < 1e-12 * np.prod(np.linalg.norm(Ai, axis=1)):
                continue
            v = np.linalg.solve(Ai, b[list(idx)])
            if np.all(A @ v <= b + 1e-10 * scale):
                pts.append(v)
        if not pts:
            return np.zeros((0, n))
        P = _unique_rows(np.array(pts))
        if n == 2 and len(P) > 2:
            P = _ccw_order(P)
        return P

    @cached_property
    def is_bounded(self) -> bool:
        n = self.dim
        for d in np.vstack([np.eye(n), -np.eye(n)]):
            res = linprog(-d, A_ub=self.A, b_ub=self.b, bounds=[(None, None)] * n, method="highs")
            if res.status == 3:
                return False
            if res.status == 2:
                return True  # empty sets are bounded
        return True

    @cached_property
    def chebyshev(self):
        """(center, radius) of the largest inscribed ball; radius < 0 if empty."""
        n = self.dim
        norms = np.linalg.norm(self.A, axis=1)
        c = np.zeros(n + 1)
        c[-1] = -1.0
        Aub = np.hstack([self.A, norms[:, None]])
        res = linprog(c, A_ub=Aub, b_ub=self.b, bounds=[(None, None)] * n + [(None, None)],
                      method="highs")
        if res.status == 2:
            return np.full(n, np.nan), -np.inf
        if res.status == 3:
            return np.full(n, np.nan), np.inf
        return res.x[:n], float(res.x[-1])

    @property
    def is_empty(self) -> bool:
        return self.chebyshev[1] < -1e-12

    def contains_point(self, x, tol=DEFAULT_TOL) -> bool:
        return bool(np.all(self.A @ np.asarray(x, dtype=float) <= self.b + tol))

    def point_margin(self, x) -> float:
        """min_k (b_k - a_k'x); negative outside."""
        return float(np.min(self.b - self.A @ np.asarray(x, dtype=float)))

    @cached_property
    def _flat(self):
        bb = self.box_bounds
        if bb is not None:
            lo, hi = bb
            return _Flat((lo + hi) / 2.0, np.diag((hi - lo) / 2.0))
        n = self.dim
        if n <= 3:
            V = self.vertices
            if len(V) == 0:
                raise ValueError("empty H-polytope has no support function")
            return _Flat(np.zeros(n), np.zeros((n, 0)), [V])
        return _Flat(np.zeros(n), np.zeros((n, 0)), hmaps=[(np.eye(n), self)])

    def support_many(self, D):
        D = _as_dirs(D, self.dim)
        f = self._flat
        if f.hmaps:
            return np.array([self._lp_support(d) for d in D])
        return f.support_many(D)

    def _lp_support(self, d):
        res = linprog(-d, A_ub=self.A, b_ub=self.b, bounds=[(None, None)] * self.dim,
                      method="highs")
        if res.status == 3:
            raise UnboundedSetError("support LP unbounded: not a valid compact set")
        if res.status == 2:
            return -np.inf
        return -res.fun

    def scaled(self, alpha) -> HPolytope:
        """alpha * P as an H-polytope (alpha > 0)."""
        return HPolytope(self.A, alpha * self.b)

    def minimal(self) -> HPolytope:
        """Drop redundant rows (exact in dim <= 2 via vertices, LP otherwise)."""
        if self.dim <= 2:
            return hrep(self)
        keep = []
        for k in range(self.A.shape[0]):
            others = [j for j in range(self.A.shape[0]) if j != k]
            res = linprog(-self.A[k], A_ub=self.A[others], b_ub=self.b[others],
                          bounds=[(None, None)] * self.dim, method="highs")
            if res.status != 0 or -res.fun > self.b[k] + 1e-10 * (1 + abs(self.b[k])):
                keep.append(k)
        return HPolytope(self.A[keep], self.b[keep])


class VPolytope(ConvexSet):
    """Convex hull of a finite point list."""

    def __init__(self, V):
        V = np.atleast_2d(np.asarray(V, dtype=float))
        if V.shape[0] == 0:
            raise ValueError("a V-polytope needs at least one vertex")
        V.setflags(write=False)
        self.V = V
        self.dim = V.shape[1]

    def __repr__(self):
        return f"VPolytope(dim={self.dim}, vertices={self.V.shape[0]})"

    def __len__(self):
        return self.V.shape[0]

    @cached_property
    def _flat(self):
        return _Flat(np.zeros(self.dim), np.zeros((self.dim, 0)), [np.array(self.V)])


class Zonotope(ConvexSet):
    """c + G [-1, 1]^p."""

    def __init__(self, center, generators=None):
        c = np.asarray(center, dtype=float).reshape(-1)
        if generators is None:
            G = np.zeros((c.size, 0))
        else:
            G = np.asarray(generators, dtype=float)
            if G.ndim == 1:
                G = G.reshape(c.size, -1)
        if G.shape[0] != c.size:
            raise DimensionError("generator rows must match the center dimension")
        c.setflags(write=False)
        G.setflags(write=False)
        self.center = c
        self.generators = G
        self.dim = c.size

    def __repr__(self):
        return f"Zonotope(dim={self.dim}, order={self.generators.shape[1]})"

    @cached_property
    def _flat(self):
        return _Flat(np.array(self.center), np.ascontiguousarray(self.generators))


class Scaled(ConvexSet):
    def __init__(self, alpha, child: ConvexSet):
        alpha = float(alpha)
        if alpha < 0:
            raise ValueError("use linear_map(-I, S) for negative scaling")
        self.alpha = alpha
        self.child = child
        self.dim = child.dim

    def __repr__(self):
        return f"Scaled({self.alpha:g}, {self.child!r})"

    @cached_property
    def _flat(self):
        f = self.child._flat
        a = self.alpha
        return _Flat(a * f.c, a * f.G, [a * V for V in f.vpolys], [(a * M, H) for M, H in f.hmaps])


class LinearMap(ConvexSet):
    def __init__(self, M, child: ConvexSet):
        M = np.atleast_2d(np.asarray(M, dtype=float))
        if M.shape[1] != child.dim:
            raise DimensionError(f"map with {M.shape[1]} columns applied to a set of dimension {child.dim}")
        M.setflags(write=False)
        self.M = M
        self.child = child
        self.dim = M.shape[0]

    def __repr__(self):
        return f"LinearMap({self.M.shape[0]}x{self.M.shape[1]}, {self.child!r})"

    @cached_property
    def _flat(self):
        f = self.child._flat
        M = self.M
        return _Flat(M @ f.c, np.ascontiguousarray(M @ f.G), [V @ M.T for V in f.vpolys],
                     [(M @ Mk, H) for Mk, H in f.hmaps])


class MinkowskiSum(ConvexSet):
    def __init__(self, children):
        children = tuple(children)
        if not children:
            raise ValueError("empty Minkowski sum; use point(zeros)")
        dims = {c.dim for c in children}
        if len(dims) != 1:
            raise DimensionError(f"Minkowski sum of sets with dimensions {sorted(dims)}")
        self.children = children
        self.dim = children[0].dim

    def __repr__(self):
        return f"MinkowskiSum({len(self.children)} terms, dim={self.dim})"

    @cached_property
    def _flat(self):
        fs = [c._flat for c in self.children]
        c = sum(f.c for f in fs)
        G = np.ascontiguousarray(np.hstack([f.G for f in fs]))
        vp = [V for f in fs for V in f.vpolys]
        hm = [h for f in fs for h in f.hmaps]
        # a single-vertex V-polytope is just a translation
        keep = []
        for V in vp:
            if len(V) == 1:
                c = c + V[0]
            else:
                keep.append(V)
        return _Flat(c, G, keep, hm)


def box(lo, hi) -> HPolytope:
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    if lo.shape != hi.shape or np.any(lo > hi):
        raise ValueError("box needs lo <= hi of equal shape")
    n = lo.size
    return HPolytope(np.vstack([np.eye(n), -np.eye(n)]), np.concatenate([hi, -lo]))


def point(x) -> Zonotope:
    return Zonotope(np.asarray(x, dtype=float).reshape(-1))


def support(S: ConvexSet, d) -> float:
    return S.support(d)


def minkowski_sum(*sets: ConvexSet) -> ConvexSet:
    parts = []
    for S in sets:
        if isinstance(S, MinkowskiSum):
            parts.extend(S.children)
        else:
            parts.append(S)
    if len(parts) == 1:
        return parts[0]
    return MinkowskiSum(parts)


def linear_map(M, S: ConvexSet) -> ConvexSet:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return LinearMap(M, S)


def pontryagin_diff(X: HPolytope, S: ConvexSet) -> HPolytope:
    """X minus S: facets of X pulled in by the support of S.

    The result may be empty; test ``result.is_empty`` rather than expecting
    an exception.
    """
    if X.dim != S.dim:
        raise DimensionError(f"Pontryagin difference of dimensions {X.dim} and {S.dim}")
    return HPolytope(X.A, X.b - S.support_many(X.A))


@dataclass(frozen=True)
class Containment:
    ok: bool
    margin: float
    worst_facet: int

    def __bool__(self):
        return self.ok


def contains(X: HPolytope, S: ConvexSet, tol=DEFAULT_TOL) -> Containment:
    """Is S a subset of X? ``margin`` is min_k (b_k - h_S(a_k))."""
    if X.dim != S.dim:
        raise DimensionError(f"containment of dimension {S.dim} in dimension {X.dim}")
    gaps = X.b - S.support_many(X.A)
    k = int(np.argmin(gaps))
    return Containment(bool(gaps[k] >= -tol), float(gaps[k]), k)


# ---------------------------------------------------------------------------
# directions


def direction_fan(dim, count=64) -> np.ndarray:
    """Deterministic unit directions: 1-D +-1, 2-D a uniform fan, 3-D+ a spiral."""
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        th = 2.0 * np.pi * np.arange(count) / count
        return np.column_stack([np.cos(th), np.sin(th)])
    # golden-angle spiral on the sphere, padded with zeros beyond 3-D
    k = np.arange(count) + 0.5
    z = 1.0 - 2.0 * k / count
    r = np.sqrt(1.0 - z * z)
    phi = np.pi * (3.0 - np.sqrt(5.0)) * k
    P = np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    if dim > 3:
        P = np.hstack([P, np.zeros((count, dim - 3))])
        P = np.vstack([P, np.eye(dim), -np.eye(dim)])
    return P


def facet_normals(S: ConvexSet) -> np.ndarray:
    """Unit outward facet normals.

    Exact for every set in 1-D and 2-D. In 3-D exact for sums of zonotopes,
    boxes and a single V-polytope; other trees fall back to atom normals plus
    a direction fan.
    """
    n = S.dim
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        H = hrep(S)
        return H.A / np.linalg.norm(H.A, axis=1, keepdims=True)
    f = S._flat
    normals = [direction_fan(n)]
    if n == 3:
        G = f.G[:, np.linalg.norm(f.G, axis=0) > 0]
        for i, j in itertools.combinations(range(G.shape[1]), 2):
            c = np.cross(G[:, i], G[:, j])
            nc = np.linalg.norm(c)
            if nc > 1e-12 * np.linalg.norm(G[:, i]) * np.linalg.norm(G[:, j]):
                normals.append(np.vstack([c, -c]) / nc)
        for V in f.vpolys:
            if len(V) > n:
                from scipy.spatial import ConvexHull

                try:
                    eq = ConvexHull(V).equations[:, :n]
                    normals.append(eq / np.linalg.norm(eq, axis=1, keepdims=True))
                except Exception:  # degenerate hull
                    pass
    for M, H in f.hmaps:
        if M.shape[0] == M.shape[1] and abs(np.linalg.det(M)) > 1e-12:
            Nm = H.A @ np.linalg.inv(M)
            normals.append(Nm / np.linalg.norm(Nm, axis=1, keepdims=True))
    return _unique_rows(np.vstack(normals), tol=1e-12)


def test_directions(*sets: ConvexSet, fan=64) -> np.ndarray:
    """Facet normals of every set plus the deterministic fan."""
    dim = sets[0].dim
    parts = [direction_fan(dim, fan)]
    for S in sets:
        parts.append(facet_normals(S))
    return _unique_rows(np.vstack(parts), tol=1e-12)


# ---------------------------------------------------------------------------
# explicit 2-D geometry


def _unique_rows(P, tol=1e-10):
    if len(P) == 0:
        return P
    scale = max(1.0, float(np.abs(P).max()))
    keep = [P[0]]
    for p in P[1:]:
        if all(np.abs(p - q).max() > tol * scale for q in keep):
            keep.append(p)
    return np.array(keep)


def _ccw_order(P):
    c = P.mean(axis=0)
    ang = np.arctan2(P[:, 1] - c[1], P[:, 0] - c[0])
    return P[np.argsort(ang, kind="stable")]


def _hull_2d(P):
    """Andrew's monotone chain, counterclockwise, collinear points dropped."""
    P = np.unique(np.round(P, 15), axis=0)
    if len(P) <= 2:
        return P

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    scale = float(np.abs(P).max()) or 1.0
    eps = 1e-13 * scale * scale
    lower = []
    for p in P:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= eps:
            lower.pop()
        lower.append(p)
    upper = []
    for p in P[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= eps:
            upper.pop()
        upper.append(p)
    H = np.array(lower[:-1] + upper[:-1])
    return H


def _edge_normal_angles(V):
    """Outward normal angles of a CCW polygon (segments get both sides)."""
    if len(V) == 1:
        return np.zeros(0)
    if len(V) == 2:
        e = V[1] - V[0]
        a = np.arctan2(-e[0], e[1])
        return np.array([a, a + np.pi])
    E = np.roll(V, -1, axis=0) - V
    return np.arctan2(-E[:, 0], E[:, 1])


def vertices_2d(S: ConvexSet, fan=256) -> VPolytope:
    """Counterclockwise vertices of a set of dimension <= 2.

    Exact for trees of zonotopes, boxes, V- and H-polytopes (normal-fan
    merge). H-atoms living in higher dimension and mapped down are sampled
    on ``fan`` directions instead.
    """
    if S.dim > 2:
        raise DimensionError("vertices_2d needs a set of dimension <= 2")
    if S.dim == 1:
        lo, hi = -S.support([-1.0]), S.support([1.0])
        return VPolytope([[lo], [hi]] if hi > lo else [[lo]])
    f = S._flat
    polys = []
    for V in f.vpolys:
        polys.append(_hull_2d(V))
    for M, H in f.hmaps:
        th = 2.0 * np.pi * np.arange(fan) / fan
        D = np.column_stack([np.cos(th), np.sin(th)])
        pts = []
        for d in D:
            res = linprog(-(M.T @ d), A_ub=H.A, b_ub=H.b, bounds=[(None, None)] * H.dim, method="highs")
            pts.append(M @ res.x)
        polys.append(_hull_2d(np.array(pts)))
    G = f.G[:, np.linalg.norm(f.G, axis=0) > 1e-300]
    angles = []
    if G.shape[1]:
        a = np.arctan2(-G[0], G[1])
        angles.append(a)
        angles.append(a + np.pi)
    for P in polys:
        angles.append(_edge_normal_angles(P))
    angles = np.concatenate(angles) if angles else np.zeros(0)
    if angles.size == 0:
        c = f.c + sum((P[0] for P in polys), np.zeros(2))
        return VPolytope(c[None, :])
    angles = np.sort(np.mod(angles, 2.0 * np.pi))
    uniq = [angles[0]]
    for a in angles[1:]:
        if a - uniq[-1] > 1e-12:
            uniq.append(a)
    if len(uniq) > 1 and (uniq[0] + 2.0 * np.pi) - uniq[-1] <= 1e-12:
        uniq.pop()
    uniq = np.array(uniq)
    nxt = np.append(uniq[1:], uniq[0] + 2.0 * np.pi)
    mid = 0.5 * (uniq + nxt)
    # the vertex between consecutive normals n_k, n_{k+1} is the argmax along
    # any direction strictly between them
    Dm = np.column_stack([np.cos(mid), np.sin(mid)])
    verts = np.tile(f.c, (len(mid), 1))
    if G.shape[1]:
        verts = verts + np.sign(Dm @ G) @ G.T
    for P in polys:
        verts = verts + P[np.argmax(Dm @ P.T, axis=1)]
    # the vertex for gap k sits between normals k and k+1; rotate so that
    # vertices follow counterclockwise order starting at the smallest angle
    out = [verts[0]]
    scale = max(1.0, float(np.abs(verts).max()))
    for v in verts[1:]:
        if np.abs(v - out[-1]).max() > 1e-13 * scale:
            out.append(v)
    if len(out) > 1 and np.abs(out[0] - out[-1]).max() <= 1e-13 * scale:
        out.pop()
    return VPolytope(np.array(out))


def hrep(S: ConvexSet) -> HPolytope:
    """Exact H-representation with unit normals.

    Dimensions 1 and 2 accept any set; lower-dimensional sets get a flat
    representation (a segment is bounded by two opposite normals plus its
    two end caps). Dimension 3 accepts full-dimensional zonotope sums, whose
    facet normals are cross products of generator pairs.
    """
    if S.dim == 1:
        lo, hi = -S.support([-1.0]), S.support([1.0])
        return HPolytope([[1.0], [-1.0]], [hi, -lo])
    if S.dim == 3:
        return _hrep_zonotope_3d(S)
    if S.dim != 2:
        raise DimensionError("hrep is exact only for dimension <= 3")
    V = vertices_2d(S).V
    if len(V) == 1:
        return HPolytope(np.vstack([np.eye(2), -np.eye(2)]), np.concatenate([V[0], -V[0]]))
    if len(V) == 2:
        e = V[1] - V[0]
        e = e / np.linalg.norm(e)
        nrm = np.array([-e[1], e[0]])
        A = np.vstack([nrm, -nrm, e, -e])
        b = np.array([nrm @ V[0], -nrm @ V[0], max(e @ V[0], e @ V[1]), -min(e @ V[0], e @ V[1])])
        return HPolytope(A, b)
    E = np.roll(V, -1, axis=0) - V
    N = np.column_stack([E[:, 1], -E[:, 0]])
    N = N / np.linalg.norm(N, axis=1, keepdims=True)
    b = np.einsum("ij,ij->i", N, V)
    return HPolytope(N, b)


def _hrep_zonotope_3d(S):
    f = S._flat
    if f.vpolys or f.hmaps:
        raise DimensionError("3-D H-representation is only exact for zonotope sums")
    G = f.G[:, np.linalg.norm(f.G, axis=0) > 0]
    if G.shape[1] == 0 or np.linalg.matrix_rank(G) < 3:
        raise DimensionError("3-D H-representation needs a full-dimensional zonotope")
    rows = []
    for i, j in itertools.combinations(range(G.shape[1]), 2):
        c = np.cross(G[:, i], G[:, j])
        nc = np.linalg.norm(c)
        if nc > 1e-12 * np.linalg.norm(G[:, i]) * np.linalg.norm(G[:, j]):
            rows.append(c / nc)
            rows.append(-c / nc)
    N = _unique_rows(np.array(rows), tol=1e-12)
    return HPolytope(N, S.support_many(N))


def sample(S: ConvexSet, rng, size=None) -> np.ndarray:
    """Random points of S (not uniform); needs a set without H-atoms."""
    f = S._flat
    if f.hmaps:
        raise NotImplementedError("sampling sets with n-D H-polytope atoms")
    k = 1 if size is None else int(size)
    P = np.tile(f.c, (k, 1))
    if f.G.shape[1]:
        P = P + rng.uniform(-1.0, 1.0, (k, f.G.shape[1])) @ f.G.T
    for V in f.vpolys:
        P = P + rng.dirichlet(np.ones(len(V)), k) @ V
    return P[0] if size is None else P


# ---------------------------------------------------------------------------
# dumps


def write_vertex_csv(fh, named_sets):
    """Write ``# set <name>`` blocks of ``x,y`` rows for each (name, set) pair."""
    for name, S in named_sets:
        V = vertices_2d(S).V
        fh.write(f"# set {name}\n")
        fh.write("x,y\n")
        for v in V:
            y = v[1] if v.size > 1 else 0.0
            fh.write(f"{v[0]!r},{y!r}\n")


def svg_polygons(panels, size=240, pad=12):
    """SVG with one panel per entry of ``panels``.

    Each panel is ``(title, [(name, set, style), ...])`` with style one of
    ``"hatched"`` or ``"filled"``. Every panel is scaled to its own bounding
    box (unit-scaled viewBox per panel).
    """
    cols = len(panels)
    W = cols * (size + pad) + pad
    Hh = size + 2 * pad + 16
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{Hh}" viewBox="0 0 {W} {Hh}">',
        "<defs><pattern id=\"hatch\" width=\"6\" height=\"6\" patternUnits=\"userSpaceOnUse\" "
        "patternTransform=\"rotate(45)\"><line x1=\"0\" y1=\"0\" x2=\"0\" y2=\"6\" "
        "stroke=\"black\" stroke-width=\"0.7\"/></pattern></defs>",
    ]
    for k, (title, items) in enumerate(panels):
        polys = [(name, vertices_2d(S).V, style) for name, S, style in items]
        allv = np.vstack([P for _, P, _ in polys])
        lo, hi = allv.min(axis=0), allv.max(axis=0)
        span = np.where(hi - lo > 0, hi - lo, 1.0)
        x0 = pad + k * (size + pad)
        out.append(f'<g transform="translate({x0},{pad + 16})">')
        out.append(f'<text x="0" y="-4" font-size="11" font-family="sans-serif">{title}</text>')
        for name, P, style in polys:
            q = (P - lo) / span
            pts = " ".join(f"{size * u:.3f},{size * (1 - v):.3f}" for u, v in q)
            fill = "url(#hatch)" if style == "hatched" else "#9ecae1"
            out.append(f'<path d="M {pts} Z" fill="{fill}" stroke="black" stroke-width="1">'
                       f"<title>{name}</title></path>")
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
