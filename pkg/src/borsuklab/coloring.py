"""Colourings, the exact k-colourability solver and the cap-cover certificate."""

import heapq
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components
from scipy.spatial import ConvexHull, cKDTree
from sklearn.utils.validation import check_is_fitted

from ._validation import check_positive_int, check_sphere_points
from .graph import is_bipartite, two_coloring
from .rng import as_generator
from .sphere import sample_uniform

DEFAULT_NODE_BUDGET = 10**8


@dataclass
class Coloring:
    colors: np.ndarray
    k: int

    def is_proper(self, g):
        c = np.asarray(self.colors)
        if len(c) != g.n_:
            return False
        if len(c) and (c.min() < 0 or c.max() >= self.k):
            return False
        e = g.edges_
        return bool(len(e) == 0 or np.all(c[e[:, 0]] != c[e[:, 1]]))

    def to_list(self):
        return [int(x) for x in self.colors]


class ChromaticUnknown(RuntimeError):
    """The node budget ran out before the chromatic number was pinned down."""

    def __init__(self, lo, hi):
        super().__init__(f"chromatic number undecided within budget: bounds [{lo}, {hi}]")
        self.lo = lo
        self.hi = hi


def _adjacency_lists(g):
    A = g.adjacency_
    return [A.indices[A.indptr[i]:A.indptr[i + 1]].tolist() for i in range(A.shape[0])]


def greedy_color(g):
    """DSATUR greedy colouring; uses at most ``max degree + 1`` colours."""
    check_is_fitted(g, "adjacency_")
    n = g.n_
    if n == 0:
        return Coloring(np.zeros(0, dtype=np.int64), 1)
    adj = _adjacency_lists(g)
    color = [-1] * n
    seen = [set() for _ in range(n)]
    deg = [len(a) for a in adj]
    heap = [(0, -deg[v], v) for v in range(n)]
    heapq.heapify(heap)
    while heap:
        neg_sat, _, v = heapq.heappop(heap)
        if color[v] != -1 or -neg_sat != len(seen[v]):
            continue  # stale entry
        c = 0
        while c in seen[v]:
            c += 1
        color[v] = c
        for w in adj[v]:
            if color[w] == -1 and c not in seen[w]:
                seen[w].add(c)
                heapq.heappush(heap, (-len(seen[w]), -deg[w], w))
    colors = np.array(color, dtype=np.int64)
    return Coloring(colors, int(colors.max()) + 1)


class _Budget:
    def __init__(self, limit):
        self.limit = limit
        self.used = 0


def _dsatur_search(vertices, adj, k, budget):
    """Backtracking k-colouring of one connected component.

    Branches on the uncoloured vertex of maximum saturation (ties: degree),
    only opens one fresh colour per node (colour symmetry) and prunes as soon
    as some uncoloured vertex sees all k colours.  Returns a dict colouring,
    ``False`` if none exists, or ``None`` when the budget runs out.
    """
    local = {v: i for i, v in enumerate(vertices)}
    m = len(vertices)
    nbrs = [[local[w] for w in adj[v]] for v in vertices]
    deg = [len(x) for x in nbrs]
    color = [-1] * m
    counts = [[0] * k for _ in range(m)]
    sat = [0] * m

    def assign(v, c):
        color[v] = c
        dead = False
        for w in nbrs[v]:
            row = counts[w]
            if row[c] == 0:
                sat[w] += 1
                if sat[w] == k and color[w] == -1:
                    dead = True
            row[c] += 1
        return dead

    def unassign(v, c):
        color[v] = -1
        for w in nbrs[v]:
            row = counts[w]
            row[c] -= 1
            if row[c] == 0:
                sat[w] -= 1

    def pick():
        best, key = -1, (-1, -1)
        for v in range(m):
            if color[v] == -1:
                kv = (sat[v], deg[v])
                if kv > key:
                    best, key = v, kv
        return best

    solution = {}

    def rec_collect(n_colored, n_used):
        if n_colored == m:
            for i, v in enumerate(vertices):
                solution[v] = color[i]
            return True
        budget.used += 1
        if budget.used > budget.limit:
            return None
        v = pick()
        row = counts[v]
        for c in range(min(k, n_used + 1)):
            if row[c]:
                continue
            dead = assign(v, c)
            res = False if dead else rec_collect(n_colored + 1, max(n_used, c + 1))
            unassign(v, c)
            if res is None or res:
                return res
        return False

    res = rec_collect(0, 0)
    if res is None:
        return None
    if not res:
        return False
    return solution


def k_colorable(g, k, node_budget=DEFAULT_NODE_BUDGET):
    """Exact decision of k-colourability.

    Returns ``(True, Coloring)``, ``(False, None)`` or ``(None, None)`` when
    the search exceeded ``node_budget`` branch nodes (undecided, never a
    guess).  Components are solved independently; greedy colouring and the
    bipartiteness test short-cut the easy cases.
    """
    import sys

    check_is_fitted(g, "adjacency_")
    k = check_positive_int(k, "k")
    n = g.n_
    if n == 0:
        return True, Coloring(np.zeros(0, dtype=np.int64), k)
    if g.n_edges == 0:
        return True, Coloring(np.zeros(n, dtype=np.int64), k)
    if k == 1:
        return False, None
    greedy = greedy_color(g)
    if greedy.k <= k:
        return True, Coloring(greedy.colors, k)
    if k == 2:
        two = two_coloring(g)
        return (True, Coloring(two, 2)) if two is not None else (False, None)
    adj = _adjacency_lists(g)
    _, labels = connected_components(g.adjacency_, directed=False)
    colors = np.zeros(n, dtype=np.int64)
    budget = _Budget(node_budget)
    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 4 * n + 1000))
    try:
        for lab in np.unique(labels):
            comp = np.flatnonzero(labels == lab).tolist()
            if len(comp) == 1:
                continue
            sol = _dsatur_search(comp, adj, k, budget)
            if sol is None:
                return None, None
            if sol is False:
                return False, None
            for v, c in sol.items():
                colors[v] = c
    finally:
        sys.setrecursionlimit(limit)
    return True, Coloring(colors, k)


def chromatic_number(g, node_budget=DEFAULT_NODE_BUDGET):
    """Smallest k with ``k_colorable(g, k)``.

    Searches upwards from the cheap lower bound (1, 2 with an edge, 3 with an
    odd cycle) to the greedy palette size, which is an upper bound.  Raises
    :class:`ChromaticUnknown` with the current bounds if the budget runs out.
    """
    check_is_fitted(g, "adjacency_")
    if g.n_ == 0 or g.n_edges == 0:
        return 1
    hi = greedy_color(g).k
    lo = 2 if is_bipartite(g)[0] else 3
    for k in range(lo, hi):
        ok, _ = k_colorable(g, k, node_budget)
        if ok is None:
            raise ChromaticUnknown(k, hi)
        if ok:
            return k
    return hi


def covering_radius(points):
    """Exact geodesic covering radius of a finite subset of S^d.

    The farthest point of the sphere from the set is a vertex of its
    spherical Voronoi diagram, i.e. the outward unit normal of a facet of
    the convex hull.  Returns ``pi`` when the hull does not contain the
    origin in its interior (the set then misses an open hemisphere).
    """
    P = check_sphere_points(points)
    dim = P.shape[1]
    if len(P) <= dim:
        return float(np.pi)
    try:
        hull = ConvexHull(P)
    except Exception:
        return float(np.pi)
    offsets = hull.equations[:, -1]
    # facet plane: normal . x + offset = 0, origin inside <=> offsets < 0
    if np.any(offsets >= -1e-12):
        return float(np.pi)
    cosines = -offsets / np.linalg.norm(hull.equations[:, :-1], axis=1)
    cosines = np.clip(cosines, -1.0, 1.0)
    return float(np.max(np.arccos(cosines)))


def fibonacci_sphere(n):
    """Spherical Fibonacci lattice of ``n`` points on S^2."""
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    phi = np.pi * (1.0 + np.sqrt(5.0)) * i
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def _hull_far_points(P, beta):
    hull = ConvexHull(P)
    eq = hull.equations
    norm = np.linalg.norm(eq[:, :-1], axis=1)
    cosines = np.clip(-eq[:, -1] / norm, -1.0, 1.0)
    far = np.arccos(cosines) > beta
    return eq[far, :-1] / norm[far, None]


def beta_net(d, beta, seed=0, max_rounds=200):
    """A finite subset of S^d whose covering radius is at most ``beta``.

    d = 2 starts from a Fibonacci lattice; other dimensions start from a
    random sample thinned greedily to spacing ``beta``.  Either way the net is
    then refined by adding every spherical Voronoi vertex farther than
    ``beta`` until the exact covering radius is ``<= beta``.
    """
    beta = float(beta)
    if not 0 < beta < np.pi / 2:
        raise ValueError("beta must lie in (0, pi/2)")
    rng = as_generator(seed)
    # surface area ratio gives the order of magnitude of the net size
    est = int(np.ceil(4.0 / beta ** d)) + d + 2
    if d == 2:
        P = fibonacci_sphere(max(est, 8))
    else:
        pool = sample_uniform(d, 4 * est, rng)
        keep = []
        tree_pts = []
        chord = 2 * np.sin(beta / 2)
        for p in pool:
            if tree_pts and np.min(np.linalg.norm(np.asarray(tree_pts) - p, axis=1)) < chord:
                continue
            tree_pts.append(p)
            keep.append(p)
        P = np.asarray(keep)
        P = np.vstack([P, np.eye(d + 1), -np.eye(d + 1)])
    for _ in range(max_rounds):
        far = _hull_far_points(P, beta)
        if len(far) == 0:
            return P
        P = np.vstack([P, far])
    raise RuntimeError("beta-net refinement did not converge")


@dataclass
class CoverCertificate:
    """Net-based certificate that the caps ``cap(v, alpha/2)`` cover S^d.

    Valid only if every net point is within ``alpha/2 - margin`` of a
    vertex and the net has covering radius ``<= margin``.  A failed check
    is inconclusive.
    """

    alpha: float
    margin: float
    net: np.ndarray
    nearest: np.ndarray
    covered: np.ndarray
    net_covering_radius: float
    valid: bool
    extra: dict = field(default_factory=dict)

    @property
    def net_size(self):
        return len(self.net)

    def to_dict(self):
        fails = np.flatnonzero(~self.covered)
        return {
            "alpha": self.alpha,
            "margin": self.margin,
            "net_size": int(self.net_size),
            "net_covering_radius": self.net_covering_radius,
            "valid": bool(self.valid),
            "failures": [
                {"net_index": int(i), "nearest_vertex_distance": float(self.nearest[i])}
                for i in fails
            ],
        }


def cap_cover_certificate(g, net_spacing, net=None, seed=0):
    """Build the cover certificate for the Borsuk graph ``g``.

    A valid certificate implies ``chi(g) >= d + 2`` by the
    Lyusternik-Schnirelmann argument.
    """
    check_is_fitted(g, "adjacency_")
    alpha = float(g.alpha)
    beta = float(net_spacing)
    if not 0 < beta < alpha / 2:
        raise ValueError("net spacing must lie in (0, alpha/2)")
    d = g.d_
    if net is None:
        net = beta_net(d, beta, seed=seed)
    net = check_sphere_points(net, d=d)
    net_radius = covering_radius(net)
    radius = alpha / 2 - beta
    if g.n_ == 0:
        nearest = np.full(len(net), np.pi)
    else:
        chord, _ = cKDTree(g.points_).query(net)
        nearest = 2.0 * np.arcsin(np.clip(chord / 2.0, 0.0, 1.0))
    covered = nearest < radius
    valid = bool(g.n_ > 0 and net_radius <= beta and np.all(covered))
    return CoverCertificate(alpha, beta, net, nearest, covered, net_radius, valid)
