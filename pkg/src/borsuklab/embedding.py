"""Odd bump-sum perturbations of the unit sphere that dodge empty cubes.

The sample is projected to R^d and the plane is cut into a hierarchy of
cubes; a level-0 cube is good when it holds a projected point and a level-i
cube is good when at most one of its children is bad.  Working down the
levels, the radial graph ``u -> (1 + h(u)) u`` of an odd function
``h : S^{d-1} -> R`` is pushed away from the bad cubes by antisymmetrised
bumps.  ``h`` is kept symbolically as a stack of bump layers.
"""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_dimension, check_sphere_points
from .rng import as_generator
from .sphere import POLE_TOL, sample_uniform, stereo_project

log = logging.getLogger(__name__)

MAX_AMPLITUDE = 0.01
MAX_SHIFT = 0.1
ROI_RADIUS = 100.0
EFFECTIVE_SHIFT_CAP = 0.01


class PreconditionError(ValueError):
    """A hypothesis of a perturbation step failed at some probe."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


# --------------------------------------------------------------------------
# cube hierarchy


def level_side(s0, K, i):
    return s0 * K ** (i * (i + 1) // 2)


@dataclass
class CubeHierarchy:
    """Good/bad status of nested cubes ``m * s_i + [0, s_i]^d``.

    ``index[i]`` lists the integer anchors of the level-i cubes that were
    classified and ``good[i]`` their status.
    """

    s0: float
    K: int
    d: int
    max_level: int
    index: list
    good: list
    roi_radius: float = ROI_RADIUS
    window: tuple | None = None

    def side(self, i):
        return level_side(self.s0, self.K, i)

    def n_cubes(self, i):
        return len(self.index[i])

    def n_bad(self, i):
        return int(np.count_nonzero(~self.good[i]))

    def bad_anchors(self, i):
        return self.index[i][~self.good[i]].astype(float) * self.side(i)

    def status(self, i, anchor_index):
        """Status of one cube (``None`` if it was not classified)."""
        key = np.asarray(anchor_index, dtype=np.int64)
        hit = np.flatnonzero(np.all(self.index[i] == key, axis=1))
        return None if len(hit) == 0 else bool(self.good[i][hit[0]])


def _encode(idx):
    # collision-free for |index| < 2^20 per axis and d <= 3; wider arrays use row views
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    return idx.view([("", np.int64)] * idx.shape[1]).ravel()


def classify_cubes(projected, s0, K, max_level, roi_radius=ROI_RADIUS, window=None,
                   max_cubes=20_000_000):
    """Classify cubes bottom-up.

    Only top-level cubes contained in ``B(0, roi_radius)`` are considered,
    together with all their descendants; ``window=(r_in, r_out)`` further
    restricts the top level to cubes meeting that annulus, which keeps the
    bookkeeping proportional to the region the sphere's radial graph can
    reach.
    """
    Z = np.asarray(projected, dtype=float)
    if Z.ndim != 2:
        raise ValueError("projected points must be a 2-d array")
    d = Z.shape[1]
    K = int(K)
    if s0 <= 0 or K < 2:
        raise ValueError("need s0 > 0 and integer K >= 2")
    L = int(max_level)
    sL = level_side(s0, K, L)
    reach = roi_radius if window is None else min(roi_radius, window[1])
    m = int(math.ceil(reach / sL)) + 1
    axes = [np.arange(-m, m + 1)] * d
    top = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    lo = top * sL
    hi = lo + sL
    far = np.sqrt(np.sum(np.maximum(np.abs(lo), np.abs(hi)) ** 2, axis=1))
    near = np.sqrt(np.sum(np.maximum(0.0, np.maximum(lo, -hi)) ** 2, axis=1))
    keep = far < roi_radius
    if window is not None:
        keep &= (near <= window[1]) & (far >= window[0])
    top = top[keep]
    fan = K ** (L * (L + 1) // 2)
    if len(top) * fan ** d > max_cubes:
        raise MemoryError(f"{len(top) * fan ** d} level-0 cubes exceed max_cubes={max_cubes}")
    offsets = np.stack(np.meshgrid(*[np.arange(fan)] * d, indexing="ij"), axis=-1).reshape(-1, d)
    level0 = (top[:, None, :] * fan + offsets[None, :, :]).reshape(-1, d)
    occupied = np.floor(Z / s0).astype(np.int64) if len(Z) else np.zeros((0, d), dtype=np.int64)
    good0 = np.isin(_encode(level0), _encode(occupied))
    index, good = [level0], [good0]
    for i in range(1, L + 1):
        parent = np.floor_divide(index[-1], K ** i)
        uniq, inv = np.unique(parent, axis=0, return_inverse=True)
        bad_children = np.bincount(inv.ravel(), weights=(~good[-1]).astype(float), minlength=len(uniq))
        index.append(uniq)
        good.append(bad_children <= 1)
    return CubeHierarchy(s0, K, d, L, index, good, roi_radius, window)


# --------------------------------------------------------------------------
# bump sums


@dataclass(frozen=True)
class BumpLayer:
    points: np.ndarray
    signs: np.ndarray
    amplitude: float
    radius: float

    def to_dict(self):
        return {
            "points": self.points.tolist(),
            "signs": [int(s) for s in self.signs],
            "amplitude": self.amplitude,
            "radius": self.radius,
        }


def _pair_norm(P, i, Q, j):
    acc = (P[i, 0] - Q[j, 0]) ** 2
    for k in range(1, P.shape[1]):
        acc = acc + (P[i, k] - Q[j, k]) ** 2
    return np.sqrt(acc)


def _bump_mass(phi, layer, tree):
    """``sum_p b_p max(0, r - |phi - p|)`` per row of ``phi``, summed in point order."""
    out = np.zeros(len(phi))
    if len(layer.points) == 0 or len(phi) == 0:
        return out
    cand = tree.query_ball_point(phi, layer.radius * (1 + 1e-9) + 1e-15)
    lens = np.fromiter((len(c) for c in cand), dtype=np.int64, count=len(cand))
    if lens.sum() == 0:
        return out
    i = np.repeat(np.arange(len(phi)), lens)
    j = np.concatenate([np.asarray(c, dtype=np.int64) for c in cand if len(c)])
    order = np.lexsort((j, i))
    i, j = i[order], j[order]
    reach = np.maximum(0.0, layer.radius - _pair_norm(phi, i, layer.points, j))
    contrib = layer.amplitude * layer.signs[j] * reach
    return np.bincount(i, weights=contrib, minlength=len(phi))


@dataclass(frozen=True)
class BumpSum:
    """Odd function on S^{d-1}: zero plus a stack of antisymmetrised bump layers.

    Layer ``k`` adds ``b_p (max(0, r - |phi(u) - p|) - max(0, r - |phi(-u) - p|))``
    with ``phi(u) = (1 + f(u)) u`` and ``f`` the sum of the layers below.
    Evaluation carries ``f(u)`` and ``f(-u)`` together so that
    ``h(-u) == -h(u)`` holds bit for bit.
    """

    d: int
    layers: tuple = ()

    def _trees(self):
        cache = self.__dict__.get("_tree_cache")
        if cache is None or len(cache) != len(self.layers):
            cache = [cKDTree(L.points) if len(L.points) else None for L in self.layers]
            object.__setattr__(self, "_tree_cache", cache)
        return cache

    def evaluate_pair(self, U, upto=None):
        """Values at ``U`` and at ``-U`` using the first ``upto`` layers."""
        U = np.asarray(U, dtype=float)
        if U.ndim == 1:
            U = U.reshape(1, -1)
        if U.shape[1] != self.d:
            raise ValueError(f"expected points of R^{self.d}")
        layers = self.layers if upto is None else self.layers[:upto]
        trees = self._trees()
        plus = np.zeros(len(U))
        minus = np.zeros(len(U))
        for layer, tree in zip(layers, trees):
            if tree is None:
                continue
            phi_p = (1.0 + plus)[:, None] * U
            phi_m = (1.0 + minus)[:, None] * (-U)
            sa = _bump_mass(phi_p, layer, tree)
            sb = _bump_mass(phi_m, layer, tree)
            plus = plus + (sa - sb)
            minus = minus + (sb - sa)
        return plus, minus

    def __call__(self, U, upto=None):
        U = np.asarray(U, dtype=float)
        vals = self.evaluate_pair(U, upto)[0]
        return vals[0] if U.ndim == 1 else vals

    def radial_graph(self, U, upto=None):
        """``(1 + h(u)) u`` for every row of ``U``."""
        U = np.asarray(U, dtype=float).reshape(-1, self.d)
        return (1.0 + self(U, upto))[:, None] * U

    def with_layer(self, layer):
        return BumpSum(self.d, self.layers + (layer,))

    @property
    def n_layers(self):
        return len(self.layers)

    def to_dict(self):
        return {"d": self.d, "layers": [L.to_dict() for L in self.layers]}

    @classmethod
    def from_dict(cls, data):
        layers = tuple(
            BumpLayer(
                np.asarray(L["points"], dtype=float).reshape(-1, data["d"]),
                np.asarray(L["signs"], dtype=float),
                float(L["amplitude"]),
                float(L["radius"]),
            )
            for L in data["layers"]
        )
        return cls(int(data["d"]), layers)


def zero_function(d):
    return BumpSum(check_dimension(d, minimum=2))


# --------------------------------------------------------------------------
# probes


def sphere_probes(d, n, seed=0, toward=None):
    """Probe directions on S^{d-1}.

    ``n`` directions (an equally spaced circle for d = 2, uniform random
    otherwise) plus, for every point ``p`` in ``toward``, the direction of
    ``p``, its antipode and a small fan around both, which is where bump
    boundaries live.
    """
    if n == 0:
        U = np.zeros((0, d))
    elif d == 2:
        t = (np.arange(n) + 0.5) * (2 * np.pi / n)
        U = np.column_stack([np.cos(t), np.sin(t)])
    else:
        U = sample_uniform(d - 1, n, seed)
    if toward is not None and len(toward):
        P = np.asarray(toward, dtype=float)
        norms = np.linalg.norm(P, axis=1)
        P = P[norms > 0] / norms[norms > 0, None]
        rng = as_generator([_seed_int(seed), 7])
        extra = [P, -P]
        for scale in (1e-4, 1e-3, 5e-3):
            jitter = P + scale * rng.standard_normal(P.shape)
            jitter /= np.linalg.norm(jitter, axis=1)[:, None]
            extra += [jitter, -jitter]
        U = np.vstack([U] + extra)
    return U


def _seed_int(seed):
    return seed if isinstance(seed, int) else 0


def lipschitz_pairs(d, n, seed=0, scales=(1e-1, 1e-2, 1e-3, 1e-4)):
    """Random probe pairs at a spread of separations for Lipschitz ratios."""
    rng = as_generator(seed)
    U = sample_uniform(d - 1, n, rng)
    scale = np.asarray(scales)[rng.integers(0, len(scales), size=n)]
    V = U + scale[:, None] * rng.standard_normal(U.shape)
    V /= np.linalg.norm(V, axis=1)[:, None]
    return U, V


def lipschitz_ratio(f, U, V):
    gap = np.linalg.norm(U - V, axis=1)
    ok = gap > 0
    diff = np.abs(f(U[ok]) - f(V[ok]))
    return float(np.max(diff / gap[ok])) if np.any(ok) else 0.0


def _ball_counts(centers, V, radius):
    if len(V) == 0 or len(centers) == 0:
        return np.zeros(len(centers), dtype=np.int64)
    tree = cKDTree(V)
    counts = tree.query_ball_point(centers, radius, return_length=True)
    # query_ball_point is closed; open balls drop points at distance exactly radius
    if np.any(counts):
        cand = tree.query_ball_point(centers, radius)
        counts = np.array([
            sum(1 for j in c if np.linalg.norm(centers[i] - V[j]) < radius)
            for i, c in enumerate(cand)
        ], dtype=np.int64)
    return counts


def _min_distance(centers, V):
    if len(V) == 0:
        return np.full(len(centers), np.inf)
    return cKDTree(V).query(centers)[0]


# --------------------------------------------------------------------------
# orthant partition


def _orthant_code(V):
    bits = (V < 0).astype(np.int64)
    return bits @ (1 << np.arange(V.shape[1]))


def orthant_partition(V, r, U, k=None):
    """Split ``V`` into orthant-confined parts whose members are isolated at scale r/4.

    Requires ``|B(u, r) cap V| <= k`` for every ``u`` in ``U``.  Points
    within ``r/2`` of ``U`` are peeled into greedy maximal r/2-separated
    layers (at most ``k`` of them); points farther away join the last layer.
    Each layer is then cut by orthant.  Returns the non-empty parts, at most
    ``k * 2^d`` of them.
    """
    V = np.asarray(V, dtype=float)
    U = np.asarray(U, dtype=float)
    if len(V) == 0:
        return []
    d = V.shape[1]
    counts = _ball_counts(U, V, r)
    k_obs = int(counts.max()) if len(counts) else 0
    if k is None:
        k = max(k_obs, 1)
    if k_obs > k:
        worst = int(np.argmax(counts))
        raise PreconditionError(f"ball of radius {r:g} around a probe holds {k_obs} > k={k} points",
                                witness=U[worst])
    near = _min_distance(V, U) < r / 2 if len(U) else np.zeros(len(V), dtype=bool)
    remaining = np.flatnonzero(near).tolist()
    layers = []
    while remaining:
        if len(layers) == k - 1:
            layers.append(remaining)
            break
        chosen = []
        pts = V[remaining]
        for idx, v in zip(remaining, pts):
            if chosen and np.min(np.linalg.norm(V[chosen] - v, axis=1)) < r / 2:
                continue
            chosen.append(idx)
        layers.append(chosen)
        taken = set(chosen)
        remaining = [i for i in remaining if i not in taken]
    far = np.flatnonzero(~near).tolist()
    if far:
        if layers:
            layers[-1] = layers[-1] + far
        else:
            layers.append(far)
    parts = []
    for layer in layers:
        sub = V[np.asarray(sorted(layer), dtype=np.int64)]
        code = _orthant_code(sub)
        for j in range(2 ** d):
            piece = sub[code == j]
            if len(piece):
                parts.append(piece)
    for piece in parts:
        c = _ball_counts(U, piece, r / 4)
        if len(c) and c.max() > 1:
            raise PreconditionError("partition left two points in a ball of radius r/4",
                                    witness=U[int(np.argmax(c))])
    return parts


# --------------------------------------------------------------------------
# perturbation steps


@dataclass
class StepReport:
    amplitude: float
    radius: float
    n_points: int
    max_shift: float
    min_clearance: float
    clearance_target: float
    max_active_bumps: int

    @property
    def clearance_ok(self):
        return self.min_clearance >= self.clearance_target


def _check_probe_preconditions(f, V, a, r, probes, lip_pairs, tol=1e-9):
    d = f.d
    if not 0 < a < MAX_AMPLITUDE:
        raise PreconditionError(f"amplitude a={a!r} must lie in (0, {MAX_AMPLITUDE})")
    if not 0 < r < MAX_AMPLITUDE / math.sqrt(d):
        raise PreconditionError(f"radius r={r!r} must lie in (0, {MAX_AMPLITUDE}/sqrt(d))")
    if len(V):
        signs = np.sign(V)
        signs[signs == 0] = 0
        pos = np.all(V >= 0, axis=0)
        neg = np.all(V <= 0, axis=0)
        if not np.all(pos | neg):
            raise PreconditionError("points are not confined to one orthant")
    plus, minus = f.evaluate_pair(probes)
    if np.any(np.abs(plus) >= MAX_SHIFT):
        raise PreconditionError("|f| must stay below 0.1", witness=probes[int(np.argmax(np.abs(plus)))])
    if np.any(plus + minus != 0):
        raise PreconditionError("f is not odd", witness=probes[int(np.argmax(np.abs(plus + minus)))])
    if lip_pairs is not None and f.n_layers:
        ratio = lipschitz_ratio(f, *lip_pairs)
        if ratio > a * (1 + tol):
            raise PreconditionError(f"f has sampled Lipschitz ratio {ratio:g} > a={a:g}")
    phi = (1.0 + plus)[:, None] * probes
    counts = _ball_counts(phi, V, r)
    if len(counts) and counts.max() > 1:
        raise PreconditionError("a ball of radius r around the radial graph holds two points",
                                witness=probes[int(np.argmax(counts))])
    return plus


def perturb_once(f, V, a, r, probes, lip_pairs=None, check=True):
    """One bump layer that pushes the radial graph of ``f`` off the points ``V``.

    ``V`` must lie in a single orthant and be isolated at scale ``r`` along
    the radial graph.  Each ``p`` gets the sign ``+a`` when it sits inside
    the graph (``|p| < 1 + f(p/|p|)``) and ``-a`` otherwise, so its bump
    pushes the graph away from it.  Returns ``(g, StepReport)``.
    """
    V = np.asarray(V, dtype=float).reshape(-1, f.d)
    probes = np.asarray(probes, dtype=float)
    if check:
        _check_probe_preconditions(f, V, a, r, probes, lip_pairs)
    norms = np.linalg.norm(V, axis=1)
    V = V[norms > 0]
    norms = norms[norms > 0]
    if len(V) == 0:
        return f, StepReport(a, r, 0, 0.0, np.inf, a * r / 2, 0)
    inside = norms < 1.0 + f(V / norms[:, None])
    signs = np.where(inside, 1.0, -1.0)
    g = f.with_layer(BumpLayer(V, signs, float(a), float(r)))
    before = f(probes)
    after = g(probes)
    psi = (1.0 + after)[:, None] * probes
    phi = (1.0 + before)[:, None] * probes
    active = _ball_counts(phi, V, r) + _ball_counts((1.0 - before)[:, None] * (-probes), V, r)
    return g, StepReport(
        amplitude=float(a),
        radius=float(r),
        n_points=len(V),
        max_shift=float(np.max(np.abs(after - before))) if len(probes) else 0.0,
        min_clearance=float(np.min(_min_distance(psi, V))) if len(probes) else np.inf,
        clearance_target=float(a) * float(r) / 2,
        max_active_bumps=int(active.max()) if len(active) else 0,
    )


@dataclass
class Schedule:
    """Exact amplitudes/radii/shifts of the chained steps, kept as fractions."""

    a: Fraction
    r: Fraction
    steps: int
    amplitudes: list = field(default_factory=list)
    radii: list = field(default_factory=list)
    shifts: list = field(default_factory=list)

    @classmethod
    def build(cls, a, r, steps):
        a, r = Fraction(a), Fraction(r)
        sched = cls(a, r, steps)
        ai, ri = a, r / 4
        sched.amplitudes.append(ai)
        sched.radii.append(ri)
        sched.shifts.append(Fraction(0))
        for _ in range(steps):
            sched.shifts.append(ai * ri)
            ai, ri = 9 * ai, (ai / 2) * ri
            sched.amplitudes.append(ai)
            sched.radii.append(ri)
        return sched

    def closed_form(self, i):
        """``(a_i, r_i, Delta_i)`` from the closed formulas."""
        a_i = 9 ** i * self.a
        r_i = Fraction(3) ** (i * (i - 1)) / Fraction(2) ** (i + 2) * self.a ** i * self.r
        # Delta_i = a_{i-1} r_{i-1} = 2 r_i; the 2^-(i+3) variant undercounts by 4
        d_i = (Fraction(3) ** (i * (i - 1)) / Fraction(2) ** (i + 1) * self.a ** i * self.r
               if i >= 1 else Fraction(0))
        return a_i, r_i, d_i

    def matches_closed_form(self):
        return all(
            (self.amplitudes[i], self.radii[i], self.shifts[i]) == self.closed_form(i)
            for i in range(self.steps + 1)
        )

    def admissible(self, t=0.0, d=2):
        """Every step has ``a_i < 0.01``, ``r_i < 0.01/sqrt(d)`` and ``t_i < 0.1``."""
        total = Fraction(t)
        bound_r = MAX_AMPLITUDE / math.sqrt(d)
        for i in range(self.steps):
            total += self.shifts[i + 1]
            if not (0 < self.amplitudes[i] < Fraction(MAX_AMPLITUDE)):
                return False, f"a_{i}={float(self.amplitudes[i]):g}"
            if not (0 < float(self.radii[i]) < bound_r):
                return False, f"r_{i}={float(self.radii[i]):g}"
            if not float(total) < MAX_SHIFT:
                return False, f"t_{i + 1}={float(total):g}"
        return True, ""


@dataclass
class IterationReport:
    parts: list
    schedule: Schedule
    steps: list
    nested_ok: bool
    min_nested_margin: float
    final_clearance: float
    proof_constant_log3: float

    @property
    def clearance_ok(self):
        return all(s.clearance_ok for s in self.steps)


def iterate_perturbation(f, V, k, a, r, probes, lip_pairs=None, t=None):
    """Chain :func:`perturb_once` over an orthant partition of ``V``.

    The balls around the radial graph may hold up to ``k`` points of ``V``
    at radius ``r``.  ``V`` is split with :func:`orthant_partition` at scale
    ``r`` and the parts are treated in turn with ``a_{i+1} = 9 a_i``,
    ``r_{i+1} = a_i r_i / 2`` starting from ``(a, r/4)``; empty parts are
    skipped.  The schedule is checked for admissibility before any layer is
    built.  Returns ``(g, IterationReport)``.
    """
    V = np.asarray(V, dtype=float).reshape(-1, f.d)
    probes = np.asarray(probes, dtype=float)
    d = f.d
    ell = k * 2 ** d
    log3_C = ell * ell  # C = 3^(ell^2), kept as a base-3 exponent
    if len(V) == 0:
        sched = Schedule.build(a, r, 0)
        return f, IterationReport([], sched, [], True, np.inf, np.inf, log3_C)
    base = f(probes)
    if t is None:
        t = float(np.max(np.abs(base))) if len(base) else 0.0
    phi = (1.0 + base)[:, None] * probes
    parts = orthant_partition(V, r, phi, k)
    sched = Schedule.build(a, r, len(parts))
    ok, why = sched.admissible(t=t, d=d)
    if not ok:
        raise PreconditionError(f"inadmissible schedule: {why}")
    g = f
    steps = []
    nested_margin = np.inf
    for i, part in enumerate(parts):
        a_i, r_i = float(sched.amplitudes[i]), float(sched.radii[i])
        prev = g(probes)
        g, rep = perturb_once(g, part, a_i, r_i, probes, lip_pairs)
        steps.append(rep)
        cur = g(probes)
        r_next = float(sched.radii[i + 1])
        # B((1+g_{i+1})u, r_{i+1}) inside B((1+g_i)u, r_i)
        margin = r_i - (np.max(np.abs(cur - prev)) + r_next) if len(probes) else np.inf
        nested_margin = min(nested_margin, margin)
    final = float(np.min(_min_distance(g.radial_graph(probes), V))) if len(probes) else np.inf
    return g, IterationReport(parts, sched, steps, nested_margin >= 0, float(nested_margin),
                              final, log3_C)


# --------------------------------------------------------------------------
# the full construction


@dataclass
class LevelReport:
    level: int
    side: float
    n_bad: int
    n_relevant: int
    amplitude: float
    radius: float
    clearance: float
    clearance_target: float
    iteration: IterationReport | None = None

    @property
    def clearance_ok(self):
        return self.clearance >= self.clearance_target


@dataclass
class EmbeddingReport:
    n: int
    d: int
    alpha: float
    epsilon: float
    s0: float
    K: int
    levels_requested: int
    levels_used: int
    rejected: bool = False
    reason: str = ""
    level_reports: list = field(default_factory=list)
    max_abs_h: float = float("nan")
    h_bound: float = float("nan")
    max_odd_defect: float = float("nan")
    lipschitz_ratio: float = float("nan")
    min_coverage_slack: float = float("nan")
    coverage_failures: int = -1
    n_probes: int = 0

    @property
    def bounded(self):
        return self.max_abs_h < self.h_bound

    @property
    def odd(self):
        return self.max_odd_defect < 1e-12

    @property
    def lipschitz_ok(self):
        return self.lipschitz_ratio <= self.epsilon * (1 + 1e-6)

    @property
    def covered(self):
        return self.coverage_failures == 0

    @property
    def success(self):
        return (not self.rejected and self.bounded and self.odd
                and self.lipschitz_ok and self.covered)

    @property
    def cube_clearance_ok(self):
        return all(lr.clearance_ok for lr in self.level_reports)

    def to_dict(self):
        return {
            "n": self.n, "d": self.d, "alpha": self.alpha, "epsilon": self.epsilon,
            "s0": self.s0, "K": self.K,
            "levels_requested": self.levels_requested, "levels_used": self.levels_used,
            "rejected": self.rejected, "reason": self.reason, "success": self.success,
            "max_abs_h": self.max_abs_h, "h_bound": self.h_bound,
            "max_odd_defect": self.max_odd_defect, "lipschitz_ratio": self.lipschitz_ratio,
            "min_coverage_slack": self.min_coverage_slack,
            "coverage_failures": self.coverage_failures, "n_probes": self.n_probes,
            "levels": [
                {"level": lr.level, "side": lr.side, "n_bad": lr.n_bad,
                 "n_relevant": lr.n_relevant, "amplitude": lr.amplitude, "radius": lr.radius,
                 "min_clearance": lr.clearance, "clearance_target": lr.clearance_target}
                for lr in self.level_reports
            ],
        }


def level_count(n):
    """``ceil(2 log log n)`` with natural logarithms."""
    if n <= math.e:
        return 0
    return max(0, math.ceil(2 * math.log(math.log(n))))


class BadPatchEmbedding(BaseEstimator):
    """Odd, epsilon-Lipschitz ``h`` whose radial graph stays epsilon*alpha close to the sample.

    Parameters
    ----------
    epsilon : float
        Lipschitz constant and coverage radius factor.
    c : float
        ``alpha = c * n^{-1/d}``.
    K : int
        Cube growth factor between levels.
    delta : float or None
        Level-0 side ``s0 = delta * alpha``; defaults to ``0.9 * epsilon / sqrt(d)``
        so that a level-0 cube fits in a ball of radius ``epsilon * alpha``.
    constant : {"proof", "effective"}
        Per-level Lipschitz split.  ``"proof"`` uses ``C = 3^{ell^2}`` with
        ``ell = 4^d``; ``"effective"`` uses ``9^m`` with ``m`` the number of
        chained steps the level can need.
    n_probes, n_lipschitz : int
        Verification probe counts.
    """

    def __init__(self, epsilon=0.05, c=300.0, K=2, delta=None, constant="proof",
                 n_probes=10_000, n_lipschitz=100_000, window=None, seed=0):
        self.epsilon = epsilon
        self.c = c
        self.K = K
        self.delta = delta
        self.constant = constant
        self.n_probes = n_probes
        self.n_lipschitz = n_lipschitz
        self.window = window
        self.seed = seed

    def fit(self, X, y=None):
        X = check_sphere_points(X)
        n, d = len(X), X.shape[1] - 1
        if d < 2:
            raise ValueError("the construction needs d >= 2")
        eps = float(self.epsilon)
        alpha = self.c * n ** (-1.0 / d)
        delta = self.delta if self.delta is not None else 0.9 * eps / math.sqrt(d)
        s0 = delta * alpha
        K = int(self.K)
        keep = 1.0 - X[:, -1] >= POLE_TOL
        Z = stereo_project(X[keep])
        self.projected_ = Z
        self.alpha_ = alpha
        want = level_count(n)
        # a level-j step needs s_{j+1}/8 < 0.01/sqrt(d)
        top = 0
        while top + 1 <= want and level_side(s0, K, top + 1) < 8 * MAX_AMPLITUDE / math.sqrt(d):
            top += 1
        while top > 0 and level_side(s0, K, top) > 2 * ROI_RADIUS / math.sqrt(d):
            top -= 1
        if top < want:
            log.warning("using %d cube levels instead of %d: larger cubes are too big for "
                        "admissible perturbation radii at this sample size", top, want)
        rep = EmbeddingReport(n=n, d=d, alpha=alpha, epsilon=eps, s0=s0, K=K,
                              levels_requested=want, levels_used=top,
                              h_bound=n ** (-0.9 / d))
        self.report_ = rep
        sL = level_side(s0, K, top)
        w = self.window if self.window is not None else (2 * math.sqrt(d) + 1) * sL + 0.01
        hier = classify_cubes(Z, s0, K, top, window=(1.0 - w, 1.0 + w))
        self.hierarchy_ = hier
        h = zero_function(d)
        self.h_ = h
        # the top level needs B((1+h)u, 2 sqrt(d) s_top) free of bad anchors with h = 0
        blocking = self._relevant(hier.bad_anchors(top), 0.0, 2 * math.sqrt(d) * sL)
        if len(blocking):
            rep.rejected = True
            rep.reason = f"{len(blocking)} bad level-{top} cubes near the unit sphere"
            self._verify(h, Z, alpha, eps, d)
            return self
        n_bad = [hier.n_bad(j) for j in range(top + 1)]
        ell = (2 ** d) * 2 ** d
        if self.constant == "proof":
            C = [Fraction(3) ** (ell * ell)] * (top + 1)
        elif self.constant == "effective":
            # chain length at level j is at most the number of bad anchors the graph can reach
            reach = [len(self._relevant(hier.bad_anchors(j), EFFECTIVE_SHIFT_CAP,
                                        level_side(s0, K, j + 1) / 2)) for j in range(top + 1)]
            C = [Fraction(9) ** min(ell, m) for m in reach]
        else:
            raise ValueError(f"unknown constant mode {self.constant!r}")
        base_probes = sphere_probes(d, self.n_probes, self.seed)
        lip = lipschitz_pairs(d, min(self.n_lipschitz, 20_000), [self.seed, 1])
        t_bound = 0.0
        for j in range(top - 1, -1, -1):
            a_frac = Fraction(eps)
            for i in range(j + 1):
                a_frac /= C[i]
            a = float(a_frac)
            r = level_side(s0, K, j + 1) / 2
            V = self._relevant(hier.bad_anchors(j), t_bound, r)
            lr = LevelReport(j, level_side(s0, K, j), n_bad[j], len(V), a, r, np.inf,
                             2 * math.sqrt(d) * level_side(s0, K, j))
            rep.level_reports.append(lr)
            if len(V):
                if a == 0.0:
                    rep.rejected = True
                    rep.reason = f"level {j}: amplitude underflows float64"
                    break
                probes = np.vstack([base_probes, sphere_probes(d, 0, self.seed, toward=V)])
                try:
                    h, it = iterate_perturbation(h, V, 2 ** d, a, r, probes, lip, t=t_bound)
                except PreconditionError as err:
                    rep.rejected = True
                    rep.reason = f"level {j}: {err}"
                    break
                lr.iteration = it
                t_bound += sum(float(s) for s in it.schedule.shifts)
                if self.constant == "effective" and t_bound >= EFFECTIVE_SHIFT_CAP:
                    rep.rejected = True
                    rep.reason = f"level {j}: accumulated shift {t_bound:g} exceeds the cap"
                    break
            probes = sphere_probes(d, self.n_probes, self.seed, toward=V if len(V) else None)
            bad_all = hier.bad_anchors(j)
            lr.clearance = float(np.min(_min_distance(h.radial_graph(probes), bad_all))) \
                if len(bad_all) else np.inf
        self.h_ = h
        self._verify(h, Z, alpha, eps, d)
        return self

    @staticmethod
    def _relevant(anchors, t_bound, r):
        if len(anchors) == 0:
            return anchors
        radial = np.abs(np.linalg.norm(anchors, axis=1) - 1.0)
        return anchors[radial < t_bound + r + 1e-12]

    def _verify(self, h, Z, alpha, eps, d):
        rep = self.report_
        probes = sphere_probes(d, self.n_probes, [self.seed, 2])
        rep.n_probes = len(probes)
        plus, minus = h.evaluate_pair(probes)
        rep.max_abs_h = float(np.max(np.abs(plus)))
        rep.max_odd_defect = float(np.max(np.abs(plus + minus)))
        U, V = lipschitz_pairs(d, self.n_lipschitz, [self.seed, 3])
        rep.lipschitz_ratio = lipschitz_ratio(h, U, V)
        dist = _min_distance(h.radial_graph(probes), Z)
        rep.coverage_failures = int(np.count_nonzero(dist >= eps * alpha))
        rep.min_coverage_slack = float(np.min(eps * alpha - dist))

    def predict(self, U):
        """``h`` evaluated at the rows of ``U`` (unit vectors of R^d)."""
        check_is_fitted(self, "h_")
        return self.h_(U)


def build_embedding(points, epsilon, c, **params):
    """Fit :class:`BadPatchEmbedding`; returns ``(h, report)``."""
    est = BadPatchEmbedding(epsilon=epsilon, c=c, **params).fit(points)
    return est.h_, est.report_
