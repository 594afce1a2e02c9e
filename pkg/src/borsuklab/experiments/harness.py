"""Monte Carlo drivers: Poissonization, limit-law checks and threshold sweeps."""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .._validation import check_dimension
from ..coloring import cap_cover_certificate, greedy_color, k_colorable
from ..graph import _pair_dots, antipodal_edges, build_graph, double_cover_odd, is_bipartite
from ..rng import stream
from ..sphere import cap_measure, connection_constant, sample_uniform
from ..stats import (Proportion, falling_moment, fit_crossing,
                     intervals_overlap, poisson_tv_distance, wilson_interval)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
MODELS = ("borsuk", "geo-mirror", "ab", "bond")
EVENTS = ("chi>k", "bipartite", "edge-count", "certificate", "percolation")
ALPHA_RULES = ("fixed", "c_n", "c_logn", "nu")


class ConfigError(ValueError):
    pass


class AllCensored(RuntimeError):
    """Every trial of a run exhausted the solver budget."""


def parallel_map(fn, items, threads=1):
    """``map`` over ``items`` in order; results do not depend on ``threads``."""
    items = list(items)
    if threads is None or threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=int(threads)) as ex:
        return list(ex.map(fn, items))


# --------------------------------------------------------------------------
# sample sizes


def poissonize(n, seed):
    """A Po(n) sample size."""
    if n < 0:
        raise ValueError("n must be non-negative")
    if n == 0:
        return 0
    rng = seed if isinstance(seed, np.random.Generator) else stream(seed, "poisson", float(n))
    return int(rng.poisson(n))


def nested_poisson_counts(ns, seed):
    """Coupled Po(n_1) <= Po(n_2) <= ... for increasing ``ns`` by superposing independent increments."""
    ns = [float(x) for x in ns]
    if any(b < a for a, b in zip(ns, ns[1:])):
        raise ValueError("ns must be nondecreasing")
    rng = seed if isinstance(seed, np.random.Generator) else stream(seed, "nested")
    total, prev, out = 0, 0.0, []
    for n in ns:
        total += int(rng.poisson(n - prev)) if n > prev else 0
        prev = n
        out.append(total)
    return out


def alpha_for(rule, n, d):
    """Angle for a sample of (mean) size ``n`` under an alpha rule dict."""
    kind = rule.get("kind")
    if kind == "fixed":
        a = float(rule["alpha"])
    elif kind == "c_n":
        a = float(rule["c"]) * n ** (-1.0 / d)
    elif kind == "c_logn":
        a = float(rule["c"]) * (math.log(n) / n) ** (1.0 / d)
    elif kind == "nu":
        a = (float(rule["nu"]) / n ** 2) ** (1.0 / d)
    else:
        raise ConfigError(f"unknown alpha rule {kind!r}")
    if not 0 < a < math.pi:
        raise ConfigError(f"alpha={a!r} outside (0, pi)")
    return a


# --------------------------------------------------------------------------
# configuration and the generic event estimator


@dataclass
class ExperimentConfig:
    model: str = "borsuk"
    d: int = 2
    n_grid: list = field(default_factory=lambda: [1000])
    alpha_rule: dict = field(default_factory=lambda: {"kind": "c_n", "c": 3.0})
    event: str = "chi>k"
    k: int = 2
    trials: int = 100
    seed: int = 0
    poisson: bool = False
    node_budget: int = 10 ** 6
    certificate_spacing: float | None = None
    threads: int = 1
    output: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}")
        if self.event not in EVENTS:
            raise ConfigError(f"event must be one of {EVENTS}")
        if not self.n_grid:
            raise ConfigError("n_grid must be nonempty")
        if int(self.trials) < 1:
            raise ConfigError("trials must be >= 1")
        if int(self.d) < 1:
            raise ConfigError("d must be >= 1")
        rule = self.alpha_rule
        if not isinstance(rule, dict) or rule.get("kind") not in ALPHA_RULES:
            raise ConfigError(f"alpha_rule.kind must be one of {ALPHA_RULES}")
        for key in ("alpha", "c", "nu"):
            if key in rule and not float(rule[key]) > 0:
                raise ConfigError(f"alpha_rule.{key} must be positive")

    @classmethod
    def from_dict(cls, data):
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        try:
            return cls(**data)
        except TypeError as err:
            raise ConfigError(str(err)) from err

    def to_dict(self):
        return asdict(self)


@dataclass
class CellResult:
    n: float
    alpha: float
    trials: int
    hits: int
    censored: int

    @property
    def decided(self):
        return self.trials - self.censored

    @property
    def estimate(self):
        return self.hits / self.decided if self.decided else float("nan")

    @property
    def ci(self):
        return wilson_interval(self.hits, self.decided)

    def row(self):
        lo, hi = self.ci
        return {"n": self.n, "alpha": self.alpha, "trials": self.trials, "hits": self.hits,
                "censored": self.censored, "freq": self.estimate, "ci_lo": lo, "ci_hi": hi,
                "schema_version": SCHEMA_VERSION}


@dataclass
class TrialBatch:
    config: dict
    cells: list
    runtime: dict = field(default_factory=dict)

    def rows(self):
        return [c.row() for c in self.cells]

    def to_dict(self):
        return {"config": self.config, "schema_version": SCHEMA_VERSION,
                "cells": self.rows()}


def decide_chi_greater(g, k, node_budget, certificate_spacing=None, seed=0):
    """Is ``chi(g) > k``?  ``True``/``False``, or ``None`` when undecided within budget.

    Cheap routes first: greedy colouring, the bipartiteness test for k = 2,
    the cover certificate for k = d + 1, then the exact solver.
    """
    if g.n_edges == 0:
        return k < 1
    if greedy_color(g).k <= k:
        return False
    if k == 2:
        return not is_bipartite(g)[0]
    if k == g.d_ + 1 and certificate_spacing:
        try:
            cert = cap_cover_certificate(g, certificate_spacing, seed=seed)
            if cert.valid:
                return True
        except ValueError:
            pass
    ok, _ = k_colorable(g, k, node_budget)
    if ok is None:
        return None
    return not ok


def _trial_points(cfg, n, trial_key):
    rng = stream(cfg.seed, *trial_key)
    size = poissonize(n, rng) if cfg.poisson else int(n)
    return sample_uniform(cfg.d, size, rng)


def _evaluate(cfg, X, alpha, trial_key):
    ev = cfg.event
    if ev == "edge-count":
        return len(antipodal_edges(X, alpha, "grid")) > 0
    g = build_graph(X, alpha)
    if ev == "bipartite":
        return is_bipartite(g)[0]
    if ev == "chi>k":
        return decide_chi_greater(g, cfg.k, cfg.node_budget, cfg.certificate_spacing, cfg.seed)
    if ev == "certificate":
        spacing = cfg.certificate_spacing or alpha / 6
        return cap_cover_certificate(g, spacing).valid
    raise ConfigError(f"event {ev!r} is not defined for model {cfg.model!r}")


def estimate_event_probability(cfg):
    """Frequencies of the configured event on each n of the grid.

    Trial ``t`` of grid cell ``i`` uses the stream ``(seed, i, t)``.
    Undecided trials are counted as censored, never dropped.
    """
    if isinstance(cfg, dict):
        cfg = ExperimentConfig.from_dict(cfg)
    if cfg.model not in ("borsuk", "geo-mirror"):
        raise ConfigError("estimate_event_probability drives the sphere models; "
                          "use the percolation functions for ab/bond")
    t0 = time.perf_counter()
    cells = []
    for i, n in enumerate(cfg.n_grid):
        alpha = alpha_for(cfg.alpha_rule, n, cfg.d)

        def run(t, i=i, n=n, alpha=alpha):
            X = _trial_points(cfg, n, (i, t))
            return _evaluate(cfg, X, alpha, (i, t))

        res = parallel_map(run, range(cfg.trials), cfg.threads)
        hits = sum(1 for r in res if r is True)
        censored = sum(1 for r in res if r is None)
        cells.append(CellResult(float(n), alpha, cfg.trials, hits, censored))
    return TrialBatch(cfg.to_dict(), cells, {"seconds": time.perf_counter() - t0})


# --------------------------------------------------------------------------
# limit laws


def edge_count_samples(d, n, alpha, trials, seed, cell=0, poisson=False, threads=1):
    def run(t):
        rng = stream(seed, "edges", cell, t)
        size = poissonize(n, rng) if poisson else n
        X = sample_uniform(d, size, rng)
        return len(antipodal_edges(X, alpha, "grid"))

    return np.asarray(parallel_map(run, range(trials), threads), dtype=np.int64)


@dataclass
class EdgeCountReport:
    d: int
    nu: float
    n: int
    alpha: float
    trials: int
    target_mean: float
    mean: float
    var: float
    p_zero: Proportion
    tv_distance: float
    falling_moments: dict
    histogram: list

    @property
    def mean_z(self):
        se = math.sqrt(self.var / self.trials) if self.var > 0 else float("inf")
        return (self.mean - self.target_mean) / se

    @property
    def p_zero_target(self):
        return math.exp(-self.target_mean)

    def to_dict(self):
        out = {k: v for k, v in asdict(self).items() if k != "p_zero"}
        out["p_zero"] = self.p_zero.to_dict()
        out["p_zero_target"] = self.p_zero_target
        out["mean_z"] = self.mean_z
        return out


def edge_count_experiment(d, nu, n_list, trials, seed=0, poisson=False, threads=1):
    """Edge counts ``W_n`` at ``alpha = (nu / n^2)^{1/d}`` against Poisson((c_d / 2) nu)."""
    d = check_dimension(d)
    target = connection_constant(d) / 2 * nu
    reports = []
    for i, n in enumerate(n_list):
        alpha = (nu / n ** 2) ** (1.0 / d)
        if not alpha < math.pi:
            raise ValueError("alpha must be below pi")
        W = edge_count_samples(d, n, alpha, trials, seed, i, poisson, threads)
        moments = {m: {"empirical": falling_moment(W, m), "target": target ** m} for m in (1, 2, 3)}
        reports.append(EdgeCountReport(
            d, float(nu), int(n), alpha, int(trials), target, float(W.mean()),
            float(W.var(ddof=1)) if trials > 1 else 0.0,
            Proportion(int(np.count_nonzero(W == 0)), int(trials)),
            poisson_tv_distance(W, target), moments,
            np.bincount(W).tolist(),
        ))
    return reports


@dataclass
class PairProbability:
    alpha: float
    pairs: int
    hits: int
    exact: float
    asymptotic: float

    @property
    def p(self):
        return self.hits / self.pairs

    @property
    def ratio_asymptotic(self):
        return self.p / self.asymptotic

    @property
    def z_exact(self):
        sd = math.sqrt(self.exact * (1 - self.exact) / self.pairs)
        return (self.p - self.exact) / sd if sd > 0 else (0.0 if self.p == self.exact else math.inf)

    def to_dict(self):
        return asdict(self) | {"p": self.p, "ratio_asymptotic": self.ratio_asymptotic,
                               "z_exact": self.z_exact}


def pair_connection_hits(d, alpha, pairs, seed, chunk=1_000_000):
    """Count independent uniform pairs ``(u, v)`` with ``<u, v> < -cos(alpha)``."""
    thr = -math.cos(alpha)
    hits, done, block = 0, 0, 0
    while done < pairs:
        m = min(chunk, pairs - done)
        rng = stream(seed, "pairs", float(alpha), block)
        U = sample_uniform(d, m, rng)
        V = sample_uniform(d, m, rng)
        hits += int(np.count_nonzero(np.einsum("ij,ij->i", U, V) < thr))
        done += m
        block += 1
    return hits


def pn_experiment(d, alpha_list, trials, seed=0):
    """Empirical pair-connection probability vs the exact cap measure and ``c_d alpha^d``."""
    d = check_dimension(d)
    out = []
    for a in alpha_list:
        hits = pair_connection_hits(d, a, trials, seed)
        out.append(PairProbability(float(a), int(trials), hits, cap_measure(a, d),
                                   connection_constant(d) * a ** d))
    return out


# --------------------------------------------------------------------------
# threshold sweeps


def _edge_dots(X, alpha_max):
    edges = antipodal_edges(X, alpha_max, "grid" if len(X) > 64 else "brute")
    if len(edges) == 0:
        return edges, np.zeros(0)
    return edges, _pair_dots(X, edges[:, 0], edges[:, 1])


def nonbipartite_outcomes(X, alphas):
    """Non-bipartiteness at each (sorted) angle, from one edge list at the largest angle.

    The event is monotone in alpha, so the first angle at which it holds is
    found by bisection with the double-cover test.
    """
    alphas = np.asarray(alphas, dtype=float)
    n = len(X)
    edges, dots = _edge_dots(X, float(alphas.max()))
    thresholds = -np.cos(alphas)
    lo, hi = 0, len(alphas)
    while lo < hi:
        mid = (lo + hi) // 2
        if double_cover_odd(n, edges[dots < thresholds[mid]]):
            hi = mid
        else:
            lo = mid + 1
    out = np.zeros(len(alphas), dtype=bool)
    out[lo:] = True
    return out


@dataclass
class SweepReport:
    d: int
    k: int
    n_list: list
    c_list: list
    trials: int
    seed: int
    rows: list
    crossings: dict
    pooled: object | None
    flags: list

    def crossing_cis(self):
        return [self.crossings[n].ci for n in self.n_list if n in self.crossings]

    @property
    def crossings_consistent(self):
        cis = self.crossing_cis()
        return len(cis) == len(self.n_list) and intervals_overlap(cis)

    @property
    def drift(self):
        xs = [self.crossings[n].crossing for n in self.n_list if n in self.crossings]
        return max(xs) - min(xs) if xs else float("nan")

    def to_dict(self):
        return {"d": self.d, "k": self.k, "n_list": self.n_list, "c_list": self.c_list,
                "trials": self.trials, "seed": self.seed, "schema_version": SCHEMA_VERSION,
                "crossings": {str(n): f.to_dict() for n, f in self.crossings.items()},
                "pooled": self.pooled.to_dict() if self.pooled is not None else None,
                "drift": self.drift, "consistent": self.crossings_consistent,
                "flags": self.flags, "rows": self.rows}


SWEEP_COLUMNS = ["n", "c", "alpha", "trials", "hits", "censored", "freq", "ci_lo", "ci_hi",
                 "schema_version"]


def _sweep_trial(d, k, n, cs, seed, ni, t, poisson, node_budget, cert_spacing_factor):
    rng = stream(seed, "sweep", ni, t)
    size = poissonize(n, rng) if poisson else int(n)
    X = sample_uniform(d, size, rng)
    alphas = np.asarray(cs) * n ** (-1.0 / d)
    if k == 2:
        return nonbipartite_outcomes(X, alphas).astype(np.int8)
    res = np.zeros(len(cs), dtype=np.int8)
    for j, a in enumerate(alphas):
        g = build_graph(X, float(a))
        spacing = a * cert_spacing_factor if cert_spacing_factor else None
        dec = decide_chi_greater(g, k, node_budget, spacing, seed)
        res[j] = -1 if dec is None else int(dec)
    return res


def threshold_sweep(d, k, n_list, c_list, trials, seed=0, poisson=False,
                    node_budget=10 ** 6, certificate_factor=0.15, threads=1, n_boot=400,
                    fit=True):
    """P(chi > k) over ``alpha = c n^{-1/d}`` for every (n, c), and the 1/2-crossing per n.

    Trial ``t`` at the ``i``-th n draws one point set from the stream
    ``(seed, "sweep", i, t)`` and evaluates every c on it, so each trial's
    outcome is monotone in c.  Outcomes are ``1``/``0``, or censored
    when the exact solver runs out of budget.
    """
    d = check_dimension(d)
    cs = sorted(float(c) for c in c_list)
    rows, crossings, flags, all_outcomes = [], {}, [], {}
    censored_total = 0
    for ni, n in enumerate(n_list):
        def run(t, n=n, ni=ni):
            return _sweep_trial(d, k, n, cs, seed, ni, t, poisson, node_budget, certificate_factor)

        out = np.vstack(parallel_map(run, range(trials), threads)) if trials else np.zeros((0, len(cs)))
        all_outcomes[n] = out
        for j, c in enumerate(cs):
            col = out[:, j]
            cens = int(np.count_nonzero(col < 0))
            censored_total += cens
            cell = CellResult(float(n), c * n ** (-1.0 / d), trials, int(np.count_nonzero(col == 1)), cens)
            row = cell.row()
            row["c"] = c
            rows.append(row)
        decided = out[np.all(out >= 0, axis=1)]
        if fit and len(decided):
            crossings[n] = fit_crossing(cs, decided.sum(axis=0), np.full(len(cs), len(decided)),
                                        outcomes=decided, log_scale=True, n_boot=n_boot,
                                        seed=[seed, 77, ni])
            if len(decided) < trials:
                flags.append(f"n={n}: {trials - len(decided)} trials with censored cells left out of the fit")
    if trials and censored_total == trials * len(cs) * len(n_list):
        raise AllCensored("every trial was censored")
    pooled = None
    if fit and len(n_list) > 1:
        stacked = np.vstack([o[np.all(o >= 0, axis=1)] for o in all_outcomes.values()])
        pooled = fit_crossing(cs, stacked.sum(axis=0), np.full(len(cs), len(stacked)),
                              outcomes=stacked, log_scale=True, n_boot=n_boot, seed=[seed, 78])
    for n in n_list:
        block = [r for r in rows if r["n"] == float(n)]
        freq = np.array([r["freq"] for r in block])
        width = np.array([r["ci_hi"] - r["ci_lo"] for r in block])
        if np.any(np.diff(freq) < -width[:-1]):
            flags.append(f"n={n}: frequency decreases in c beyond the interval width")
    return SweepReport(d, k, list(n_list), cs, trials, seed, rows, crossings, pooled, flags)


def monotone_in_k(rows_k, rows_k1):
    """Audit ``P(chi > k) >= P(chi > k+1)`` cell by cell within the intervals."""
    bad = []
    for a, b in zip(rows_k, rows_k1):
        if a["ci_hi"] < b["ci_lo"]:
            bad.append((a["n"], a.get("c", a["alpha"])))
    return bad


def poisson_transfer_gap(d, n_list, alpha_rule, trials, seed=0, event="bipartite"):
    """``|P_Po(n) - P_n|`` per n on shared seeds, for the Poissonization audit."""
    gaps = []
    for poisson in (False, True):
        cfg = ExperimentConfig(d=d, n_grid=list(n_list), alpha_rule=alpha_rule, event=event,
                               trials=trials, seed=seed, poisson=poisson)
        gaps.append(estimate_event_probability(cfg))
    return [abs(a.estimate - b.estimate) for a, b in zip(gaps[0].cells, gaps[1].cells)]


# --------------------------------------------------------------------------
# reports


def emit_report(report, out_dir, stem="report", formats=("csv", "json"), columns=None):
    """Write ``report`` (anything with ``to_dict`` and rows) as CSV/JSON/SVG; returns the paths."""
    from pathlib import Path

    from ..io import write_csv, write_json

    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise OSError(f"cannot write to {out}: {err}") from err
    data = report.to_dict() if hasattr(report, "to_dict") else report
    rows = data.get("rows") or data.get("cells") or data.get("table") or []
    paths = {}
    if "csv" in formats:
        cols = columns or (list(rows[0].keys()) if rows else [])
        if rows and "schema_version" not in cols:
            cols = cols + ["schema_version"]
            rows = [r | {"schema_version": SCHEMA_VERSION} for r in rows]
        p = out / f"{stem}.csv"
        write_csv(p, rows, cols)
        paths["csv"] = p
    if "json" in formats:
        p = out / f"{stem}.json"
        write_json(p, data)
        paths["json"] = p
    if "svg" in formats:
        p = out / f"{stem}.svg"
        plot_sweep(rows, p)
        paths["svg"] = p
    return paths


def plot_sweep(rows, path, x="c", group="n"):
    """Static SVG of frequency curves, one per group value."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if rows and x not in rows[0]:
        x = "lambda" if "lambda" in rows[0] else "alpha"
    if rows and group not in rows[0]:
        group = "R" if "R" in rows[0] else None
    plt.rcParams["svg.hashsalt"] = "borsuklab"
    fig, ax = plt.subplots(figsize=(5, 3.5))
    keys = sorted({r[group] for r in rows}) if group else [None]
    for key in keys:
        sub = [r for r in rows if group is None or r[group] == key]
        xs = [float(r[x]) for r in sub]
        ax.errorbar(xs, [r["freq"] for r in sub],
                    yerr=[[r["freq"] - r["ci_lo"] for r in sub], [r["ci_hi"] - r["freq"] for r in sub]],
                    marker="o", ms=3, capsize=2, label=f"{group}={key:g}" if group else None)
    ax.set_xlabel(x)
    ax.set_ylabel("frequency")
    ax.set_ylim(-0.02, 1.02)
    if group:
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def to_json_bytes(obj):
    from ..io import dumps

    return dumps(obj).encode()
