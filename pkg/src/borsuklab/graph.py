"""The random Borsuk graph and its mirrored geometric twin.

Two points of S^d are adjacent when their geodesic distance exceeds
``pi - alpha``, evaluated as the strict inequality ``<u, v> < -cos(alpha)``.
Candidate pairs come from a KD-tree over the antipodes; the predicate itself
is always the exact dot-product rule, so the accelerated construction and
the O(n^2) construction agree bit for bit.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_angle, check_sphere_points
from .sphere import cap_measure
from .unionfind import UnionFind

log = logging.getLogger(__name__)

_CANDIDATE_SLACK = 1e-9


def _pair_dots(X, i, j):
    # coordinate-wise accumulation: same rounding no matter how the pairs were found
    out = X[i, 0] * X[j, 0]
    for k in range(1, X.shape[1]):
        out = out + X[i, k] * X[j, k]
    return out


def _sorted_edges(i, j):
    e = np.stack([np.minimum(i, j), np.maximum(i, j)], axis=1).astype(np.int64)
    if len(e) == 0:
        return e.reshape(0, 2)
    e = np.unique(e, axis=0)
    return e


def _candidate_pairs(P, Q, radius):
    """All ``(i, j)`` with ``|P_i - Q_j| <= radius`` (KD-tree)."""
    if len(P) == 0 or len(Q) == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    tp, tq = cKDTree(P), cKDTree(Q)
    pairs = tp.sparse_distance_matrix(tq, radius, output_type="ndarray")
    return pairs["i"].astype(np.int64), pairs["j"].astype(np.int64)


def antipodal_edges(X, alpha, method="grid"):
    """Edge list ``(m, 2)`` with ``i < j`` of the Borsuk graph on the rows of ``X``.

    ``method="grid"`` buckets the antipodes in a KD-tree and only evaluates
    the predicate on pairs within chord ``2 sin(alpha/2)`` of an antipode;
    ``method="brute"`` evaluates every pair.
    """
    alpha = check_angle(alpha)
    n = len(X)
    threshold = -np.cos(alpha)
    if n < 2:
        return np.zeros((0, 2), dtype=np.int64)
    if method == "brute":
        i, j = np.triu_indices(n, 1)
    elif method == "grid":
        radius = 2.0 * np.sin(alpha / 2.0) + _CANDIDATE_SLACK
        i, j = _candidate_pairs(X, -X, radius)
        keep = i < j
        i, j = i[keep], j[keep]
    else:
        raise ValueError(f"unknown method {method!r}")
    dots = _pair_dots(X, i, j)
    ties = int(np.count_nonzero(dots == threshold))
    if ties:
        log.info("%d exact ties on the edge predicate resolved as non-edges", ties)
    hit = dots < threshold
    return _sorted_edges(i[hit], j[hit])


def _choose_method(n, alpha, d):
    if n <= 64:
        return "brute"
    # dense regime: a quarter of all pairs or more are edges
    if cap_measure(alpha, d) > 0.25:
        return "brute"
    return "grid"


def _adjacency(n, edges):
    if len(edges) == 0:
        return csr_matrix((n, n), dtype=np.int8)
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    A = csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(n, n))
    A.sort_indices()
    return A


class BorsukGraph(BaseEstimator):
    """Borsuk graph ``G(V, alpha)`` on a finite point set of S^d.

    Parameters
    ----------
    alpha : float
        Angle parameter in ``(0, pi)``; ``u ~ v`` iff ``dist(u, v) > pi - alpha``.
    method : {"auto", "grid", "brute"}
        Edge construction strategy; all strategies give identical edge sets.

    Attributes
    ----------
    points_ : ndarray of shape (n, d+1)
    edges_ : ndarray of shape (m, 2)
        Sorted edge list with ``i < j``.
    adjacency_ : scipy.sparse.csr_matrix
        Symmetric 0/1 adjacency without self-loops.
    """

    def __init__(self, alpha=0.1, method="auto"):
        self.alpha = alpha
        self.method = method

    def fit(self, X, y=None, seed=None):
        alpha = check_angle(self.alpha)
        X = check_sphere_points(X)
        n = len(X)
        self.points_ = X
        self.d_ = X.shape[1] - 1 if X.shape[1] else 0
        self.n_ = n
        self.seed_ = seed
        method = self.method
        if method == "auto":
            method = _choose_method(n, alpha, max(self.d_, 1))
        self.method_ = method
        self.edges_ = antipodal_edges(X, alpha, method)
        self.adjacency_ = _adjacency(n, self.edges_)
        return self

    @classmethod
    def from_edges(cls, n, edges, alpha=np.pi / 2):
        """Abstract graph on ``n`` vertices with no geometry, for solver tests and loaded files."""
        g = cls(alpha=alpha, method="brute")
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if np.any(e[:, 0] == e[:, 1]):
            raise ValueError("self-loops are not allowed")
        g.points_ = None
        g.d_ = None
        g.n_ = int(n)
        g.seed_ = None
        g.method_ = "given"
        g.edges_ = _sorted_edges(e[:, 0], e[:, 1])
        g.adjacency_ = _adjacency(g.n_, g.edges_)
        return g

    @property
    def n_edges(self):
        check_is_fitted(self, "edges_")
        return len(self.edges_)

    def neighbors(self, i):
        A = self.adjacency_
        return A.indices[A.indptr[i]:A.indptr[i + 1]]

    def degrees(self):
        return np.diff(self.adjacency_.indptr)

    def has_edge(self, i, j):
        return bool(self.adjacency_[i, j])


def build_graph(points, alpha, method="auto", seed=None):
    return BorsukGraph(alpha=alpha, method=method).fit(points, seed=seed)


class GeoMirrorGraph(BaseEstimator):
    """Bipartite geometric graph between the points ``X`` and their mirrors ``Y = -X``.

    ``X_i ~ Y_j`` iff ``<X_i, Y_j> > cos(alpha)``, the strict form of
    ``dist(X_i, Y_j) <= alpha`` (ties are non-edges, as in the Borsuk graph).
    Vertices ``0..n-1`` are the X side, ``n..2n-1`` the Y side.
    """

    def __init__(self, alpha=0.1):
        self.alpha = alpha

    def fit(self, X, y=None):
        alpha = check_angle(self.alpha)
        X = check_sphere_points(X)
        n = len(X)
        Y = -X
        self.points_ = X
        self.mirrors_ = Y
        self.n_ = n
        if n == 0:
            self.edges_ = np.zeros((0, 2), dtype=np.int64)
        else:
            radius = 2.0 * np.sin(alpha / 2.0) + _CANDIDATE_SLACK
            i, j = _candidate_pairs(X, Y, radius)
            keep = i != j
            i, j = i[keep], j[keep]
            dots = X[i, 0] * Y[j, 0]
            for k in range(1, X.shape[1]):
                dots = dots + X[i, k] * Y[j, k]
            hit = dots > np.cos(alpha)
            e = np.stack([i[hit], j[hit] + n], axis=1).astype(np.int64)
            self.edges_ = e[np.lexsort((e[:, 1], e[:, 0]))] if len(e) else e.reshape(0, 2)
        self.adjacency_ = _adjacency(2 * n, self.edges_)
        return self

    @property
    def n_edges(self):
        return len(self.edges_)


def build_geo_mirror(points, alpha):
    return GeoMirrorGraph(alpha=alpha).fit(points)


@dataclass
class OddCycleWitness:
    """Closed walk ``vertices[0], ..., vertices[-1], vertices[0]`` of odd length."""

    vertices: list

    def __len__(self):
        return len(self.vertices)

    def is_valid(self, graph):
        k = len(self.vertices)
        if k < 3 or k % 2 == 0:
            return False
        A = graph.adjacency_
        return all(A[self.vertices[t], self.vertices[(t + 1) % k]] for t in range(k))


def _bfs_layers(A, roots=None):
    """BFS depth and parent arrays; one tree per component.

    A virtual source attached to one root per component turns the forest
    search into a single scipy BFS.
    """
    n = A.shape[0]
    if roots is None:
        _, labels = connected_components(A, directed=False)
        _, roots = np.unique(labels, return_index=True)
    roots = np.asarray(roots, dtype=np.int64)
    src = n
    A = A.tocoo()
    rows = np.concatenate([A.row, np.full(len(roots), src), roots])
    cols = np.concatenate([A.col, roots, np.full(len(roots), src)])
    B = csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(n + 1, n + 1))
    order, pred = breadth_first_order(B, src, directed=True, return_predecessors=True)
    depth = np.full(n + 1, -1, dtype=np.int64)
    depth[src] = 0
    for v in order[1:]:
        depth[v] = depth[pred[v]] + 1
    pred = pred[:n].copy()
    pred[np.isin(np.arange(n), roots)] = -1
    return depth[:n], pred


def _tree_cycle(pred, depth, u, v):
    a, b = [u], [v]
    while a[-1] != b[-1]:
        if depth[a[-1]] >= depth[b[-1]]:
            a.append(int(pred[a[-1]]))
        else:
            b.append(int(pred[b[-1]]))
    # a runs u -> lca, b runs v -> lca; close with the edge v-u
    return a + b[-2::-1]


def is_bipartite(g, root=None):
    """BFS two-colouring test.

    Returns ``(True, None)`` or ``(False, witness)`` where ``witness`` is an
    odd cycle closed by an edge joining two vertices of the same BFS layer.
    """
    check_is_fitted(g, "adjacency_")
    A = g.adjacency_
    if A.shape[0] == 0 or A.nnz == 0:
        return True, None
    roots = None
    if root is not None:
        _, labels = connected_components(A, directed=False)
        _, roots = np.unique(labels, return_index=True)
        roots[labels[root]] = root
    depth, pred = _bfs_layers(A, roots)
    edges = g.edges_
    same = depth[edges[:, 0]] == depth[edges[:, 1]]
    if not np.any(same):
        return True, None
    cand = edges[same]
    u, v = cand[np.argmin(depth[cand[:, 0]])]
    cycle = _tree_cycle(pred, depth, int(u), int(v))
    return False, OddCycleWitness([int(x) for x in cycle])


def two_coloring(g):
    """Proper 2-colouring (BFS layer parity) or ``None`` if the graph has an odd cycle."""
    ok, _ = is_bipartite(g)
    if not ok:
        return None
    depth, _ = _bfs_layers(g.adjacency_)
    return (depth % 2).astype(np.int64)


def antipodal_connectivity(mirror):
    """Is some ``X_i`` joined to its own mirror ``Y_i``?

    Components come from union-find over the mirror edges.  Returns
    ``(True, path)`` with a vertex path ``X_i, Y_j, X_k, ..., Y_i`` in the
    mirror graph's numbering, or ``(False, None)``.
    """
    check_is_fitted(mirror, "adjacency_")
    n = mirror.n_
    uf = UnionFind(2 * n)
    uf.union_edges(mirror.edges_)
    hits = [i for i in range(n) if uf.find(i) == uf.find(i + n)]
    if not hits:
        return False, None
    start = hits[0]
    order, pred = breadth_first_order(mirror.adjacency_, start, directed=False,
                                      return_predecessors=True)
    path = [start + n]
    while path[-1] != start:
        path.append(int(pred[path[-1]]))
    return True, path[::-1]


def mirror_path_to_walk(path, n):
    """Unmirror ``X_{i0}, Y_{j0}, X_{i1}, ..., Y_{i0}`` into an odd closed walk of the Borsuk graph."""
    walk = [v if v < n else v - n for v in path[:-1]]
    return OddCycleWitness(walk)


def has_antipodal_component(X, alpha):
    """Fast form of ``antipodal_connectivity(build_geo_mirror(X, alpha))[0]``.

    Uses the Borsuk edge list directly: the mirror graph has edges
    ``X_i - Y_j`` and ``X_j - Y_i`` for every Borsuk edge ``{i, j}``.
    """
    X = check_sphere_points(X)
    n = len(X)
    edges = antipodal_edges(X, alpha, "grid" if n > 64 else "brute")
    return double_cover_odd(n, edges)


def double_cover_odd(n, edges):
    """True iff the graph with this edge list has an odd cycle (bipartite double cover test)."""
    if len(edges) == 0:
        return False
    i, j = edges[:, 0], edges[:, 1]
    rows = np.concatenate([i, j])
    cols = np.concatenate([j + n, i + n])
    A = csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(2 * n, 2 * n))
    _, labels = connected_components(A, directed=False)
    return bool(np.any(labels[:n] == labels[n:]))


def has_triangle(g):
    """Brute-force triangle scan via ``(A @ A) * A``."""
    A = g.adjacency_.astype(np.int32)
    if A.nnz == 0:
        return False
    return (A @ A).multiply(A).nnz > 0


@dataclass
class OddGirthReport:
    bound: float
    shortest: int | None
    lengths: list
    violations: int

    @property
    def ok(self):
        return self.violations == 0


def odd_girth_floor(g, n_roots=4, seed=None):
    """Check every odd-cycle witness found against the floor ``length > pi / alpha``.

    A witness is extracted from a BFS rooted at the default roots plus
    ``n_roots - 1`` random vertices.  Each witness is validated as a closed
    walk of the graph before its length is compared to the bound.
    """
    from .rng import as_generator

    check_is_fitted(g, "adjacency_")
    bound = np.pi / float(g.alpha)
    lengths = []
    ok, w = is_bipartite(g)
    if ok:
        return OddGirthReport(bound, None, [], 0)
    witnesses = [w]
    rng = as_generator(seed)
    for r in rng.integers(0, g.n_, size=max(n_roots - 1, 0)):
        ok_r, w_r = is_bipartite(g, root=int(r))
        if not ok_r:
            witnesses.append(w_r)
    violations = 0
    for w in witnesses:
        if not w.is_valid(g):
            raise AssertionError("invalid odd-cycle witness")
        lengths.append(len(w))
        if not len(w) > bound:
            violations += 1
    return OddGirthReport(bound, min(lengths), lengths, violations)
