"""Continuum AB percolation in a box, its Boolean counterpart and bond percolation.

Points of the two Poisson processes A and B are joined when they carry
opposite labels and lie at distance at most 1.  Neighbour search buckets
points into unit cells so candidates come from the ``3^d`` adjacent cells.
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components

from ._validation import check_dimension, check_probability
from .rng import as_generator, stream
from .sphere import ball_volume, sample_uniform, stereo_project
from .stats import (Proportion, TransitionNotBracketed, fit_crossing, linear_fit,
                    wilson_interval)
from .unionfind import UnionFind

SHELL_WIDTH = 1.0
# correlation-length exponent used for the finite-size extrapolation
NU = {1: 1.0, 2: 4.0 / 3.0, 3: 0.8765, 4: 0.6845, 5: 0.5723}


@dataclass
class ABSample:
    """Points of a two-type Poisson process in the box ``[-R, R]^d``.

    ``is_a`` marks A points; ``origin`` is the index of the deterministic
    point at the origin or -1.
    """

    d: int
    R: float
    lambda_a: float
    lambda_b: float
    points: np.ndarray
    is_a: np.ndarray
    origin: int = -1

    @property
    def A(self):
        return self.points[self.is_a]

    @property
    def B(self):
        return self.points[~self.is_a]

    def __len__(self):
        return len(self.points)

    def to_jsonl(self):
        lines = []
        for i, (p, a) in enumerate(zip(self.points, self.is_a)):
            lines.append({"x": [float(v) for v in p], "label": "A" if a else "B",
                          "origin": i == self.origin})
        return lines


def sample_ab(d, R, lambda_a, lambda_b, seed=None, origin_label=None):
    """Independent Poisson processes of intensities ``lambda_a``, ``lambda_b`` in ``[-R, R]^d``.

    ``origin_label`` in ``{"A", "B"}`` appends a point at the origin with
    that label (the Palm version of the process seen from a typical point).
    """
    d = check_dimension(d)
    if R <= 0:
        raise ValueError("R must be positive")
    if lambda_a < 0 or lambda_b < 0:
        raise ValueError("intensities must be non-negative")
    rng = as_generator(seed)
    vol = (2.0 * R) ** d
    na = rng.poisson(lambda_a * vol)
    nb = rng.poisson(lambda_b * vol)
    pts = rng.uniform(-R, R, size=(na + nb, d))
    is_a = np.zeros(na + nb, dtype=bool)
    is_a[:na] = True
    origin = -1
    if origin_label is not None:
        if origin_label not in ("A", "B"):
            raise ValueError("origin_label must be 'A' or 'B'")
        pts = np.vstack([pts, np.zeros((1, d))])
        is_a = np.append(is_a, origin_label == "A")
        origin = len(pts) - 1
    return ABSample(d, float(R), float(lambda_a), float(lambda_b), pts, is_a, origin)


# --------------------------------------------------------------------------
# neighbour search


def _cell_keys(cells, lo, span):
    key = np.zeros(len(cells), dtype=np.int64)
    for k in range(cells.shape[1]):
        key = key * span[k] + (cells[:, k] - lo[k])
    return key


def close_pairs(P, Q=None, radius=1.0):
    """Index pairs ``(i, j)`` with ``|P_i - Q_j| <= radius``, via cells of side ``radius``.

    With ``Q`` omitted the pairs are taken within ``P`` with ``i < j``.
    Returned in lexicographic order.
    """
    P = np.asarray(P, dtype=float)
    same = Q is None
    Q = P if same else np.asarray(Q, dtype=float)
    empty = np.zeros((0, 2), dtype=np.int64)
    if len(P) == 0 or len(Q) == 0:
        return empty
    d = P.shape[1]
    cp = np.floor(P / radius).astype(np.int64)
    cq = np.floor(Q / radius).astype(np.int64)
    lo = np.minimum(cp.min(axis=0), cq.min(axis=0)) - 1
    span = np.maximum(cp.max(axis=0), cq.max(axis=0)) - lo + 2
    kq = _cell_keys(cq, lo, span)
    order = np.argsort(kq, kind="stable")
    kq_sorted = kq[order]
    ii, jj = [], []
    for off in itertools.product((-1, 0, 1), repeat=d):
        kp = _cell_keys(cp + np.asarray(off), lo, span)
        start = np.searchsorted(kq_sorted, kp, side="left")
        stop = np.searchsorted(kq_sorted, kp, side="right")
        cnt = stop - start
        total = int(cnt.sum())
        if total == 0:
            continue
        i = np.repeat(np.arange(len(P)), cnt)
        first = np.repeat(start - np.concatenate([[0], np.cumsum(cnt)[:-1]]), cnt)
        j = order[first + np.arange(total)]
        ii.append(i)
        jj.append(j)
    if not ii:
        return empty
    i = np.concatenate(ii)
    j = np.concatenate(jj)
    diff = P[i] - Q[j]
    keep = np.einsum("ij,ij->i", diff, diff) <= radius * radius
    if same:
        keep &= i < j
    pairs = np.column_stack([i[keep], j[keep]])
    if len(pairs):
        pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
    return pairs


def ab_edges(sample, radius=1.0):
    """Edges ``(i, j)`` (indices into ``sample.points``) joining A to B at distance <= radius."""
    ia = np.flatnonzero(sample.is_a)
    ib = np.flatnonzero(~sample.is_a)
    pairs = close_pairs(sample.points[ia], sample.points[ib], radius)
    if len(pairs) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    return np.column_stack([ia[pairs[:, 0]], ib[pairs[:, 1]]])


def boolean_edges(points, radius=1.0):
    return close_pairs(points, None, radius)


def _brute_ab_edges(sample, radius=1.0):
    P = sample.points
    diff = P[:, None, :] - P[None, :, :]
    close = np.einsum("ijk,ijk->ij", diff, diff) <= radius * radius
    close &= sample.is_a[:, None] & ~sample.is_a[None, :]
    i, j = np.nonzero(close)
    return np.column_stack([i, j])


# --------------------------------------------------------------------------
# clusters


@dataclass
class ClusterLabeling:
    component: np.ndarray
    sizes: np.ndarray
    touches_boundary: np.ndarray

    @property
    def n_components(self):
        return len(self.sizes)

    def same_partition(self, other):
        """True if both labelings induce the same partition of the points."""
        a, b = self.component, other.component
        if len(a) != len(b):
            return False
        pairs = set(zip(a.tolist(), b.tolist()))
        return len(pairs) == len(set(a.tolist())) == len(set(b.tolist()))


def _shell_mask(points, R, shell=SHELL_WIDTH):
    if len(points) == 0:
        return np.zeros(0, dtype=bool)
    return np.max(np.abs(points), axis=1) >= R - shell


def _labeling(n, edges, in_shell, method="bulk"):
    if method == "unionfind":
        comp = UnionFind(n).union_edges(edges).labels()
    else:
        if n == 0:
            comp = np.zeros(0, dtype=np.int64)
        else:
            A = coo_matrix((np.ones(len(edges), dtype=np.int8), (edges[:, 0], edges[:, 1])),
                           shape=(n, n))
            _, raw = connected_components(A, directed=False)
            _, first = np.unique(raw, return_index=True)
            remap = np.empty(len(first), dtype=np.int64)
            remap[np.argsort(first)] = np.arange(len(first))
            comp = remap[raw]
    k = int(comp.max()) + 1 if n else 0
    sizes = np.bincount(comp, minlength=k)
    touches = np.zeros(k, dtype=bool)
    if n:
        touches[np.unique(comp[in_shell])] = True
    return ClusterLabeling(comp, sizes, touches)


def build_clusters(sample, method="grid", shell=SHELL_WIDTH):
    """Components of the A-B graph; ``method="brute"`` uses all O(n^2) pairs and a union-find."""
    if method == "grid":
        edges = ab_edges(sample)
        return _labeling(len(sample), edges, _shell_mask(sample.points, sample.R, shell))
    if method == "brute":
        edges = _brute_ab_edges(sample)
        return _labeling(len(sample), edges, _shell_mask(sample.points, sample.R, shell),
                         method="unionfind")
    raise ValueError(f"unknown method {method!r}")


def _origin_reaches(n, edges, origin, in_shell):
    if in_shell[origin]:
        return True
    if len(edges) == 0:
        return False
    A = coo_matrix((np.ones(len(edges), dtype=np.int8), (edges[:, 0], edges[:, 1])),
                   shape=(n, n)).tocsr()
    reached = breadth_first_order(A, origin, directed=False, return_predecessors=False)
    return bool(np.any(in_shell[reached]))


# --------------------------------------------------------------------------
# coupled sweeps over the intensity


@dataclass
class _MarkedSample:
    points: np.ndarray
    is_a: np.ndarray
    marks: np.ndarray
    edges: np.ndarray
    origin: int


def _marked_sample(d, R, lam_max, rng, model):
    """Sample at ``lam_max`` with uniform marks; thinning to ``mark < lam/lam_max`` gives intensity ``lam``."""
    vol = (2.0 * R) ** d
    if model == "ab":
        na = rng.poisson(lam_max * vol)
        nb = rng.poisson(lam_max * vol)
    elif model == "boolean":
        na, nb = rng.poisson(lam_max * vol), 0
    else:
        raise ValueError(f"unknown model {model!r}")
    pts = np.vstack([rng.uniform(-R, R, size=(na + nb, d)), np.zeros((1, d))])
    marks = np.append(rng.uniform(size=na + nb), -1.0)
    is_a = np.zeros(na + nb + 1, dtype=bool)
    is_a[:na] = True
    is_a[-1] = True
    origin = na + nb
    if model == "ab":
        s = ABSample(d, R, lam_max, lam_max, pts, is_a, origin)
        edges = ab_edges(s)
    else:
        edges = boolean_edges(pts)
    return _MarkedSample(pts, is_a, marks, edges, origin)


def _reach_at(ms, frac, R, shell):
    """Does the origin cluster of the thinned sample (box ``[-R, R]^d``) meet the shell?"""
    box = np.max(np.abs(ms.points), axis=1) <= R
    alive = (ms.marks < frac) & box
    e = ms.edges
    e = e[alive[e[:, 0]] & alive[e[:, 1]]] if len(e) else e
    in_shell = alive & (np.max(np.abs(ms.points), axis=1) >= R - shell)
    return _origin_reaches(len(ms.points), e, ms.origin, in_shell)


def _monotone_outcomes(ms, fracs, R, shell):
    """Outcome per (sorted) thinning fraction; monotone, so bisect for the first success."""
    out = np.zeros(len(fracs), dtype=bool)
    lo, hi = 0, len(fracs)
    while lo < hi:
        mid = (lo + hi) // 2
        if _reach_at(ms, fracs[mid], R, shell):
            hi = mid
        else:
            lo = mid + 1
    out[lo:] = True
    return out


def reach_outcomes(d, lambdas, R, trials, seed, model="ab", shell=SHELL_WIDTH, cell=(0,)):
    """``trials x len(lambdas)`` boolean outcomes of the origin cluster meeting the shell.

    All intensities of one trial are thinnings of one sample, keyed by
    ``(seed, *cell, trial)``.
    """
    lam = np.asarray(lambdas, dtype=float)
    order = np.argsort(lam)
    lam_max = float(lam.max())
    out = np.zeros((trials, len(lam)), dtype=bool)
    if lam_max <= 0:
        return out
    fracs = lam[order] / lam_max
    for t in range(trials):
        rng = stream(seed, *cell, t)
        ms = _marked_sample(d, R, lam_max, rng, model)
        out[t, order] = _monotone_outcomes(ms, fracs, R, shell)
    return out


def boundary_reach_prob(d, lam, R, trials, seed=0, model="ab", shell=SHELL_WIDTH):
    """Probability that the cluster of an A point at the origin meets ``{|x|_inf >= R - shell}``."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    d = check_dimension(d)
    if lam == 0:
        return Proportion(0, trials)
    out = reach_outcomes(d, [lam], R, trials, seed, model, shell, cell=("reach", float(lam), float(R)))
    return Proportion(int(out.sum()), trials)


def reach_profile(d, lam, radii, trials, seed=0, model="ab", shell=SHELL_WIDTH):
    """Reach probabilities for several box sizes from nested restrictions of one sample per trial."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    radii = sorted(float(r) for r in radii)
    hits = np.zeros(len(radii), dtype=np.int64)
    if lam > 0:
        for t in range(trials):
            rng = stream(seed, "profile", float(lam), t)
            ms = _marked_sample(d, radii[-1], lam, rng, model)
            for k, R in enumerate(radii):
                hits[k] += _reach_at(ms, 1.0, R, shell)
    return {R: Proportion(int(h), trials) for R, h in zip(radii, hits)}


@dataclass
class DecayFit:
    radii: list
    probabilities: list
    slope: float
    intercept: float
    r_squared: float

    @property
    def decaying(self):
        return self.slope < 0

    def to_dict(self):
        return {"radii": self.radii, "probabilities": [p.to_dict() for p in self.probabilities],
                "slope": self.slope, "intercept": self.intercept, "r_squared": self.r_squared}


def decay_fit(profile):
    """Regress ``log P`` on ``R``; cells with zero hits are not usable and raise."""
    radii = sorted(profile)
    probs = [profile[R] for R in radii]
    if any(p.hits == 0 for p in probs):
        raise ValueError("a radius has no hits; increase trials")
    slope, icpt, r2 = linear_fit(radii, [math.log(p.estimate) for p in probs])
    return DecayFit(radii, probs, slope, icpt, r2)


def m_k_statistic(d, lam, k, trials, seed=0):
    """P(M_k > 0): some A point of ``B(0, k/2)`` connects to ``B(0, k)^c``.

    A path leaving ``B(0, k)`` first exits at a point of ``B(0, k+1)``, so
    the sample lives in that ball.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    d = check_dimension(d)
    if trials <= 0:
        raise ValueError("trials must be positive")
    hits = 0
    if lam > 0:
        for t in range(trials):
            s = sample_ab(d, k + 1.0, lam, lam, stream(seed, "mk", float(lam), int(k), t))
            r = np.linalg.norm(s.points, axis=1)
            keep = r < k + 1.0
            sub = ABSample(d, k + 1.0, lam, lam, s.points[keep], s.is_a[keep])
            rr = r[keep]
            lab = _labeling(len(sub), ab_edges(sub), rr >= k)
            inner = sub.is_a & (rr < k / 2)
            hits += bool(np.any(lab.touches_boundary[lab.component[inner]]))
    return Proportion(hits, trials)


@dataclass
class LambdaCEstimate:
    estimate: float
    ci: tuple
    model: str
    d: int
    lambda_grid: list
    box_sizes: list
    table: list = field(default_factory=list)
    crossings: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    def to_dict(self):
        return {"estimate": self.estimate, "ci_lo": self.ci[0], "ci_hi": self.ci[1],
                "model": self.model, "d": self.d, "lambda_grid": self.lambda_grid,
                "box_sizes": self.box_sizes,
                "crossings": {str(R): c.to_dict() for R, c in self.crossings.items()},
                "flags": self.flags, "table": self.table}

    def csv_rows(self):
        return self.table


def _richardson(l1, l2, R1, R2, theta):
    w1, w2 = R1 ** theta, R2 ** theta
    return (w2 * l2 - w1 * l1) / (w2 - w1)


def estimate_lambda_c(d, lambda_grid, box_sizes, trials_per_cell, seed=0, model="ab",
                      shell=SHELL_WIDTH, n_boot=400, extrapolate=True):
    """Finite-size estimate of the critical intensity.

    For each box size the reach frequency is fitted by a logistic curve in
    the intensity; the 1/2-crossings of the two largest boxes are
    extrapolated with exponent ``1/nu``.  The interval is a bootstrap over
    trials.  Raises :class:`TransitionNotBracketed` if some box size never
    straddles 1/2.
    """
    d = check_dimension(d)
    grid = sorted(float(x) for x in lambda_grid)
    sizes = sorted(float(R) for R in box_sizes)
    if not grid or not sizes:
        raise TransitionNotBracketed("transition not bracketed: empty grid")
    if trials_per_cell <= 0:
        raise ValueError("trials_per_cell must be positive")
    table, fits, outcomes, flags = [], {}, {}, []
    for ri, R in enumerate(sizes):
        out = reach_outcomes(d, grid, R, trials_per_cell, seed, model, shell, cell=(model, ri))
        hits = out.sum(axis=0)
        lo, hi = wilson_interval(hits, np.full(len(grid), trials_per_cell))
        for lam, h, a, b in zip(grid, hits, lo, hi):
            table.append({"lambda": lam, "R": R, "trials": trials_per_cell, "hits": int(h),
                          "freq": h / trials_per_cell, "ci_lo": float(a), "ci_hi": float(b)})
        freq = hits / trials_per_cell
        if np.any(np.diff(freq) < -(hi[:-1] - lo[:-1])):
            flags.append(f"non-monotone frequencies at R={R:g}")
        fits[R] = fit_crossing(grid, hits, np.full(len(grid), trials_per_cell), outcomes=out,
                               n_boot=n_boot, seed=[seed, 1000 + ri])
        outcomes[R] = out
    big = fits[sizes[-1]]
    if extrapolate and len(sizes) >= 2:
        R1, R2 = sizes[-2], sizes[-1]
        theta = 1.0 / NU.get(d, 0.5)
        f1, f2 = fits[R1], fits[R2]
        est = _richardson(f1.crossing, f2.crossing, R1, R2, theta)
        m = min(len(f1.boot), len(f2.boot))
        if m >= 10:
            boot = _richardson(f1.boot[:m], f2.boot[:m], R1, R2, theta)
            lo, hi = np.percentile(boot, [2.5, 97.5])
            ci = (float(min(lo, est)), float(max(hi, est)))
        else:
            ci = (-np.inf, np.inf)
            flags.append("bootstrap failed")
    else:
        est, ci = big.crossing, big.ci
    if flags:
        # widen by the spread of the per-size crossings when the data look off
        spread = max(f.crossing for f in fits.values()) - min(f.crossing for f in fits.values())
        ci = (ci[0] - spread, ci[1] + spread)
    return LambdaCEstimate(float(est), ci, model, d, grid, sizes, table, fits, flags)


def boolean_lambda_c(d, lambda_grid, box_sizes, trials_per_cell, seed=0, **kw):
    """Same protocol for the single-type model with connection distance 1."""
    return estimate_lambda_c(d, lambda_grid, box_sizes, trials_per_cell, seed, model="boolean", **kw)


def c2_constant(d, lambda_c):
    """``((d+1) kappa_{d+1} lambda_c)^{1/d}``."""
    d = check_dimension(d)
    if lambda_c < 0:
        raise ValueError("lambda_c must be non-negative")
    return ((d + 1) * ball_volume(d + 1) * lambda_c) ** (1.0 / d)


def lambda_from_c2(d, c2):
    """Inverse of :func:`c2_constant`."""
    return c2 ** d / ((d + 1) * ball_volume(d + 1))


# --------------------------------------------------------------------------
# covering and the projected intensity


def covered_predicate(sample, lo, hi, probe_spacing):
    """Sound check that every point of the box ``[lo, hi]`` has A and B points within 1/4.

    Probes sit at the centres of a grid of cells of side ``probe_spacing``;
    each must see both labels within ``1/4 - (sqrt(d)/2) * probe_spacing``.
    """
    d = sample.d
    h = float(probe_spacing)
    if not 0 < h < 1 / (2 * math.sqrt(d)):
        raise ValueError("probe_spacing must lie in (0, 1/(2 sqrt(d)))")
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (d,))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (d,))
    A, B = sample.A, sample.B
    if len(A) == 0 or len(B) == 0:
        return False
    axes = []
    for k in range(d):
        m = max(1, int(math.ceil((hi[k] - lo[k]) / h)))
        axes.append(lo[k] + (np.arange(m) + 0.5) * ((hi[k] - lo[k]) / m))
    cell = max((hi[k] - lo[k]) / len(axes[k]) for k in range(d))
    probes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    need = 0.25 - (math.sqrt(d) / 2) * cell
    from scipy.spatial import cKDTree

    da = cKDTree(A).query(probes)[0]
    db = cKDTree(B).query(probes)[0]
    return bool(np.all(da < need) and np.all(db < need))


def covered_directly(sample, points):
    """Exact check at the given points (used to audit :func:`covered_predicate`)."""
    from scipy.spatial import cKDTree

    if len(sample.A) == 0 or len(sample.B) == 0:
        return False
    da = cKDTree(sample.A).query(points)[0]
    db = cKDTree(sample.B).query(points)[0]
    return bool(np.all(da < 0.25) and np.all(db < 0.25))


def projection_window_radius(t, alpha):
    """``2 sqrt(1 - t^2) / ((1 + t) alpha)``: radius of the image of the polar cap."""
    return 2.0 * math.sqrt(1.0 - t * t) / ((1.0 + t) * alpha)


@dataclass
class IntensityReport:
    d: int
    n: int
    alpha: float
    t: float
    rho: float
    rho_observed: float
    window: float
    mean_count: float
    count_sd: float
    lower_bound: float
    upper_bound: float
    subcell_counts: np.ndarray
    chi2_pvalue: float
    trials: int

    @property
    def within_bounds(self):
        se = self.count_sd / math.sqrt(self.trials)
        return self.lower_bound - 4 * se <= self.mean_count <= self.upper_bound + 4 * se

    @property
    def rho_consistent(self):
        return self.rho_observed <= self.rho * (1 + 1e-12)

    def to_dict(self):
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                for k, v in self.__dict__.items()} | {"within_bounds": self.within_bounds}


def cap_projection_intensity_check(d, n, alpha, t, trials, seed=0, t0=0.0):
    """Projected, rescaled points of the polar cap ``{x_{d+1} < -t}`` against the analytic intensity bounds.

    Points are mapped by ``2 pi(x) / alpha``.  The mean count in
    ``B(0, rho/2)`` is compared with the two constant-intensity bounds times
    the window volume, and counts in the ``2^d`` orthant sectors of
    ``B(0, rho/4)`` are tested for equal means.
    """
    from scipy import stats

    d = check_dimension(d)
    if not t0 <= t < 1:
        raise ValueError(f"t must lie in [{t0}, 1)")
    rho = projection_window_radius(t, alpha)
    window = rho / 2
    vol = ball_volume(d) * window ** d
    norm = (d + 1) * ball_volume(d + 1)
    scale = (alpha / 2) ** d
    lower = n * (1 + t) ** d / norm * scale * vol
    upper = n * 2 ** d / norm * scale * vol
    counts = np.zeros(trials)
    sub = np.zeros((trials, 2 ** d))
    rho_obs = 0.0
    for k in range(trials):
        X = sample_uniform(d, n, stream(seed, "capproj", k))
        cap = X[X[:, -1] < -t]
        Y = 2.0 * stereo_project(cap) / alpha if len(cap) else np.zeros((0, d))
        r = np.linalg.norm(Y, axis=1)
        if len(r):
            rho_obs = max(rho_obs, float(r.max()))
        counts[k] = np.count_nonzero(r < window)
        inner = Y[r < rho / 4]
        code = (inner < 0).astype(np.int64) @ (1 << np.arange(d))
        sub[k] = np.bincount(code, minlength=2 ** d)
    totals = sub.sum(axis=0)
    pval = float(stats.chisquare(totals).pvalue) if totals.sum() > 0 else 1.0
    return IntensityReport(d, n, alpha, t, rho, rho_obs, window, float(counts.mean()),
                           float(counts.std(ddof=1)) if trials > 1 else 0.0,
                           lower, upper, totals, pval, trials)


# --------------------------------------------------------------------------
# bond percolation on a box of Z^d


def _box_edges(d, m):
    side = 2 * m + 1
    idx = np.arange(side ** d).reshape((side,) * d)
    edges = []
    for axis in range(d):
        a = np.take(idx, np.arange(side - 1), axis=axis).ravel()
        b = np.take(idx, np.arange(1, side), axis=axis).ravel()
        edges.append(np.column_stack([a, b]))
    return np.vstack(edges), int(idx[(m,) * d])


def bond_percolation_box(d, m, p, trials, seed=0, epsilon=0.1):
    """Fraction of runs where the origin's open cluster in ``{-m..m}^d`` exceeds ``(1 - eps)`` of the box."""
    d = check_dimension(d)
    p = check_probability(p, "p")
    if trials <= 0:
        raise ValueError("trials must be positive")
    edges, origin = _box_edges(d, m)
    n = (2 * m + 1) ** d
    hits = 0
    for t in range(trials):
        rng = stream(seed, "bond", int(m), float(p), t)
        open_ = rng.uniform(size=len(edges)) < p
        e = edges[open_]
        A = coo_matrix((np.ones(len(e), dtype=np.int8), (e[:, 0], e[:, 1])), shape=(n, n))
        _, lab = connected_components(A, directed=False)
        hits += np.count_nonzero(lab == lab[origin]) > (1 - epsilon) * n
    return Proportion(int(hits), trials)
