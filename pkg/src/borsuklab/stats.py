"""Interval estimates and threshold-crossing fits."""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize, stats

from .rng import as_generator

Z95 = float(stats.norm.ppf(0.975))


def wilson_interval(hits, trials, z=Z95):
    """Wilson score interval for a binomial proportion.

    Returns ``(lo, hi)``; ``(0, 1)`` when there are no trials.
    """
    hits = np.asarray(hits, dtype=float)
    trials = np.asarray(trials, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(trials > 0, hits / np.where(trials > 0, trials, 1), 0.0)
        denom = 1 + z * z / np.where(trials > 0, trials, 1)
        centre = (p + z * z / (2 * np.where(trials > 0, trials, 1))) / denom
        half = z * np.sqrt(p * (1 - p) / np.where(trials > 0, trials, 1)
                           + z * z / (4 * np.where(trials > 0, trials, 1) ** 2)) / denom
    lo = np.where(trials > 0, np.clip(centre - half, 0.0, 1.0), 0.0)
    hi = np.where(trials > 0, np.clip(centre + half, 0.0, 1.0), 1.0)
    # guard the exact endpoints against rounding
    lo = np.where(hits == 0, 0.0, np.minimum(lo, p))
    hi = np.where(hits == trials, 1.0, np.maximum(hi, p))
    if lo.ndim == 0:
        return float(lo), float(hi)
    return lo, hi


@dataclass
class Proportion:
    hits: int
    trials: int

    @property
    def estimate(self):
        return self.hits / self.trials if self.trials else float("nan")

    @property
    def ci(self):
        return wilson_interval(self.hits, self.trials)

    def to_dict(self):
        lo, hi = self.ci
        return {"hits": int(self.hits), "trials": int(self.trials),
                "freq": self.estimate, "ci_lo": lo, "ci_hi": hi}


def logistic4(x, lo, hi, mid, slope):
    return lo + (hi - lo) / (1.0 + np.exp(-slope * (x - mid)))


def _crossing4(lo, hi, mid, slope, level=0.5):
    frac = (level - lo) / (hi - lo)
    if not 0 < frac < 1:
        return float("nan")
    return mid + math.log(frac / (1 - frac)) / slope


class TransitionNotBracketed(ValueError):
    """The frequencies never straddle the crossing level."""


def _check_bracket(freq, level=0.5, lo=0.05, hi=0.95):
    freq = np.asarray(freq, dtype=float)
    if np.all(freq < lo) or np.all(freq > hi):
        raise TransitionNotBracketed("transition not bracketed: all frequencies on one side")
    if freq.min() >= level or freq.max() <= level:
        raise TransitionNotBracketed(
            f"transition not bracketed: frequencies span [{freq.min():.3f}, {freq.max():.3f}]")


def fit_logistic(x, hits, trials, level=0.5):
    """Weighted least-squares 4-parameter logistic; returns ``(params, crossing)``.

    Frequencies are weighted by the inverse width of their Wilson interval.
    Falls back to a two-parameter curve with asymptotes 0 and 1 when the full
    fit does not converge, and to linear interpolation between the cells that
    straddle ``level`` when the data are a step (fewer than two cells strictly
    inside (0, 1)) or neither fit converges.
    """
    x = np.asarray(x, dtype=float)
    hits = np.asarray(hits, dtype=float)
    trials = np.asarray(trials, dtype=float)
    freq = hits / trials
    ci_lo, ci_hi = wilson_interval(hits, trials)
    sigma = np.maximum((ci_hi - ci_lo) / 2, 1e-6)
    # start from linear interpolation of the crossing
    order = np.argsort(x)
    xs, fs = x[order], freq[order]
    above = np.flatnonzero(fs >= level)
    i = above[0] if len(above) else len(xs) - 1
    mid0 = xs[i] if i == 0 else xs[i - 1] + (xs[i] - xs[i - 1]) * (
        (level - fs[i - 1]) / max(fs[i] - fs[i - 1], 1e-12))
    span = max(xs[-1] - xs[0], 1e-12)
    slope0 = 8.0 / span
    step = np.array([0.0, 1.0, mid0, 8.0 / max(xs[i] - xs[i - 1] if i > 0 else span, 1e-12)])
    if np.count_nonzero((fs > 0) & (fs < 1)) < 2:
        return step, float(mid0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            p, _ = optimize.curve_fit(
                logistic4, x, freq, p0=[0.0, 1.0, mid0, slope0], sigma=sigma,
                bounds=([0.0, 0.5, xs[0] - span, 1e-6], [0.5, 1.0, xs[-1] + span, 1e4]),
                maxfev=2000,
            )
            cross = _crossing4(*p, level=level)
            if np.isfinite(cross):
                return p, cross
        except (RuntimeError, ValueError):
            pass
        try:
            p2, _ = optimize.curve_fit(
                lambda t, mid, slope: logistic4(t, 0.0, 1.0, mid, slope), x, freq,
                p0=[mid0, slope0], sigma=sigma, maxfev=2000,
            )
        except (RuntimeError, ValueError):
            return step, float(mid0)
    p = np.array([0.0, 1.0, p2[0], p2[1]])
    return p, _crossing4(*p, level=level)


@dataclass
class CrossingFit:
    crossing: float
    ci: tuple
    params: np.ndarray
    boot: np.ndarray
    log_scale: bool = False

    def to_dict(self):
        return {"crossing": self.crossing, "ci_lo": self.ci[0], "ci_hi": self.ci[1],
                "params": [float(v) for v in self.params], "log_scale": self.log_scale,
                "n_boot": int(len(self.boot))}


def fit_crossing(x, hits, trials, outcomes=None, level=0.5, log_scale=False, n_boot=200,
                 seed=0, check_bracket=True):
    """Locate where the event frequency crosses ``level``.

    ``outcomes`` (trials x grid boolean array) enables a bootstrap that
    resamples whole trial rows, which keeps coupled sweeps coupled; without
    it the cells are resampled independently.  Returns :class:`CrossingFit`
    with a percentile 95% interval.
    """
    x = np.asarray(x, dtype=float)
    hits = np.asarray(hits, dtype=float)
    trials = np.asarray(trials, dtype=float)
    if check_bracket:
        _check_bracket(hits / trials, level)
    t = np.log(x) if log_scale else x
    params, cross = fit_logistic(t, hits, trials, level)
    rng = as_generator(seed)
    boot = []
    for _ in range(n_boot):
        if outcomes is not None:
            rows = rng.integers(0, len(outcomes), size=len(outcomes))
            bh = outcomes[rows].sum(axis=0).astype(float)
            bt = np.full(len(x), float(len(outcomes)))
        else:
            bh = rng.binomial(trials.astype(np.int64), hits / trials).astype(float)
            bt = trials
        try:
            _, c = fit_logistic(t, bh, bt, level)
        except (RuntimeError, ValueError):
            continue
        if np.isfinite(c):
            boot.append(c)
    boot = np.asarray(boot)
    if len(boot) >= 10:
        lo, hi = np.percentile(boot, [2.5, 97.5])
        lo, hi = min(lo, cross), max(hi, cross)
    else:
        lo, hi = -np.inf, np.inf
    if log_scale:
        return CrossingFit(float(np.exp(cross)), (float(np.exp(lo)), float(np.exp(hi))),
                           params, np.exp(boot), True)
    return CrossingFit(float(cross), (float(lo), float(hi)), params, boot, False)


def intervals_overlap(intervals):
    """True if all intervals share a common point."""
    lo = max(i[0] for i in intervals)
    hi = min(i[1] for i in intervals)
    return lo <= hi


def linear_fit(x, y):
    """Least-squares line; returns ``(slope, intercept, r_squared)``."""
    res = stats.linregress(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    return float(res.slope), float(res.intercept), float(res.rvalue ** 2)


def poisson_tv_distance(counts, mean):
    """Total variation between the empirical law of ``counts`` and Poisson(mean)."""
    counts = np.asarray(counts, dtype=np.int64)
    top = int(max(counts.max() if len(counts) else 0, stats.poisson.ppf(1 - 1e-12, mean))) + 1
    emp = np.bincount(counts, minlength=top + 1)[: top + 1] / max(len(counts), 1)
    pmf = stats.poisson.pmf(np.arange(top + 1), mean)
    tail = max(0.0, 1.0 - pmf.sum())
    return float(0.5 * (np.abs(emp - pmf).sum() + tail))


def falling_moment(counts, m):
    """Empirical ``E[W (W-1) ... (W-m+1)]``."""
    w = np.asarray(counts, dtype=float)
    prod = np.ones_like(w)
    for j in range(m):
        prod *= w - j
    return float(prod.mean())
