"""Exact geometry on the round sphere S^d embedded in R^{d+1}.

Points of S^d are rows of float64 arrays of shape ``(n, d+1)``; projected
points are rows of shape ``(n, d)``.  The stereographic projection is taken
from the north pole ``(0, ..., 0, 1)`` onto the hyperplane ``x_{d+1} = 0``.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gamma
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import (
    check_angle,
    check_dimension,
    check_projected_points,
    check_sphere_points,
)
from .rng import as_generator

POLE_TOL = 1e-9


class DomainError(ValueError):
    """A point lies outside the domain of a map (for instance the projection pole)."""


@dataclass(frozen=True)
class Cap:
    """Open spherical cap ``{x : dist(center, x) < opening}``."""

    center: np.ndarray
    opening: float

    def __post_init__(self):
        center = check_sphere_points(self.center)[0]
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "opening", check_angle(self.opening, "opening", include_upper=True))

    @property
    def d(self):
        return self.center.shape[0] - 1

    def contains(self, X):
        X = check_sphere_points(X, d=self.d)
        return geodesic_distance(X, self.center) < self.opening

    def measure(self):
        return cap_measure(self.opening, self.d)


def sample_uniform(d, n, seed=None):
    """Draw ``n`` i.i.d. uniform points on S^d.

    Normalised standard Gaussians; the renormalisation also removes any
    rounding drift so every row has unit norm to within 1e-12.
    """
    d = check_dimension(d)
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    rng = as_generator(seed)
    G = rng.standard_normal((int(n), d + 1))
    if n == 0:
        return G
    norms = np.linalg.norm(G, axis=1)
    # norm 0 has probability zero; redraw defensively
    while np.any(norms == 0):
        bad = norms == 0
        G[bad] = rng.standard_normal((int(bad.sum()), d + 1))
        norms = np.linalg.norm(G, axis=1)
    return G / norms[:, None]


def _dots(u, v):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape[-1] != v.shape[-1]:
        raise ValueError(f"dimension mismatch: {u.shape[-1]} vs {v.shape[-1]} coordinates")
    return np.einsum("...i,...i->...", u, v)


def geodesic_distance(u, v):
    """Angle between unit vectors, clamped so that antipodes give exactly pi."""
    return np.arccos(np.clip(_dots(u, v), -1.0, 1.0))


def chord_distance(u, v):
    """Euclidean distance in R^{d+1}; equals ``2 sin(dist/2)``."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape[-1] != v.shape[-1]:
        raise ValueError(f"dimension mismatch: {u.shape[-1]} vs {v.shape[-1]} coordinates")
    return np.linalg.norm(u - v, axis=-1)


def stereo_project(X):
    """Project from the north pole: ``x -> x_hat / (1 - x_{d+1})``."""
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = check_sphere_points(X)
    denom = 1.0 - X[:, -1]
    if np.any(denom < POLE_TOL):
        idx = int(np.argmin(denom))
        raise DomainError(f"point {idx} is within {POLE_TOL:g} of the projection pole")
    Z = X[:, :-1] / denom[:, None]
    return Z[0] if single else Z


def stereo_inverse(Z):
    """Inverse stereographic projection R^d -> S^d minus the north pole."""
    Z = np.asarray(Z, dtype=float)
    single = Z.ndim == 1
    Z = check_projected_points(Z)
    sq = np.einsum("ij,ij->i", Z, Z)
    X = np.empty((Z.shape[0], Z.shape[1] + 1))
    X[:, :-1] = 2.0 * Z / (1.0 + sq)[:, None]
    X[:, -1] = (sq - 1.0) / (sq + 1.0)
    X /= np.linalg.norm(X, axis=1)[:, None]
    return X[0] if single else X


def antipodal_projected(Z):
    """The antipodal map read in projected coordinates: ``z -> -z / |z|^2``."""
    Z = np.asarray(Z, dtype=float)
    single = Z.ndim == 1
    Z = check_projected_points(Z)
    sq = np.einsum("ij,ij->i", Z, Z)
    if np.any(sq == 0):
        raise DomainError("the origin maps to the projection pole under the antipodal map")
    W = -Z / sq[:, None]
    return W[0] if single else W


def ball_volume(d):
    """Volume of the unit ball in R^d, ``pi^{d/2} / Gamma(d/2 + 1)``."""
    d = check_dimension(d, minimum=0)
    return float(np.pi ** (d / 2) / gamma(d / 2 + 1))


def projected_density(Z, d=None):
    """Density of the projection of a uniform point of S^d, evaluated at ``Z``."""
    Z = np.asarray(Z, dtype=float)
    single = Z.ndim == 1
    Z = check_projected_points(Z, d)
    d = Z.shape[1] if d is None else d
    sq = np.einsum("ij,ij->i", Z, Z)
    dens = (2.0 / (1.0 + sq)) ** d / ((d + 1) * ball_volume(d + 1))
    return float(dens[0]) if single else dens


def projected_radial_density(r, d):
    """Density of ``|Z|``: the surface area factor ``d kappa_d r^{d-1}`` times the pdf."""
    d = check_dimension(d)
    r = np.asarray(r, dtype=float)
    surface = d * ball_volume(d) * r ** (d - 1)
    return surface * (2.0 / (1.0 + r * r)) ** d / ((d + 1) * ball_volume(d + 1))


def projected_radial_cdf(r, d):
    """``P(|Z| <= r)`` obtained by integrating the radial density."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    out = np.array([
        _adaptive_gauss_legendre(lambda s: projected_radial_density(s, d), 0.0, float(x))
        if x > 0 else 0.0
        for x in r
    ])
    return np.clip(out, 0.0, 1.0)


@lru_cache(maxsize=None)
def _legendre_nodes(order):
    return np.polynomial.legendre.leggauss(order)


def _gl(f, a, b, order):
    x, w = _legendre_nodes(order)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return half * float(np.dot(w, f(mid + half * x)))


def _adaptive_gauss_legendre(f, a, b, rtol=1e-10, atol=1e-15, order=20, depth=40):
    """Adaptive bisection with paired Gauss-Legendre rules of orders ``order`` and ``2*order``."""
    if b == a:
        return 0.0
    coarse = _gl(f, a, b, order)
    fine = _gl(f, a, b, 2 * order)
    if abs(fine - coarse) <= max(atol, rtol * abs(fine)) or depth == 0:
        return fine
    m = 0.5 * (a + b)
    return (_adaptive_gauss_legendre(f, a, m, rtol, atol / 2, order, depth - 1)
            + _adaptive_gauss_legendre(f, m, b, rtol, atol / 2, order, depth - 1))


def cap_measure(opening, d):
    """Normalised uniform measure of a cap of the given opening angle on S^d."""
    d = check_dimension(d)
    opening = check_angle(opening, "opening", include_upper=True)
    if d == 1:
        return opening / np.pi
    integrand = lambda t: np.sin(t) ** (d - 1)  # noqa: E731
    total = _adaptive_gauss_legendre(integrand, 0.0, np.pi)
    if opening <= np.pi / 2:
        part = _adaptive_gauss_legendre(integrand, 0.0, opening)
    else:
        # integrate the smaller complementary piece for accuracy near pi
        part = total - _adaptive_gauss_legendre(integrand, opening, np.pi)
    return float(min(max(part / total, 0.0), 1.0))


def connection_constant(d):
    """Small-angle coefficient ``c_d`` with ``cap_measure(a, d) ~ c_d a^d``."""
    d = check_dimension(d)
    return float(gamma((d + 3) / 2) / ((d + 1) * np.sqrt(np.pi) * gamma((d + 2) / 2)))


def near_pole_delta(epsilon):
    """Largest cap radius around the south pole on which projection is (1/2+eps)-Lipschitz.

    Solves ``1 / (1 + cos(3 delta)) < 1/2 + epsilon`` for delta, which is the
    criterion coming from bounding the projection's derivative along the
    geodesic (the geodesic between two points of the cap stays in the cap
    of three times the radius).
    """
    epsilon = float(epsilon)
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if epsilon >= 0.5:
        return np.pi / 3
    bound = np.arccos((0.5 - epsilon) / (0.5 + epsilon)) / 3.0
    return float(np.nextafter(bound, 0.0))


@dataclass
class DistortionReport:
    geodesic: float
    projected: float
    lower_bound: float
    lower_ok: bool
    near_pole_bound: float | None
    near_pole_ok: bool | None
    general_bound: float
    general_ok: bool

    @property
    def violations(self):
        flags = [self.lower_ok, self.general_ok]
        if self.near_pole_ok is not None:
            flags.append(self.near_pole_ok)
        return sum(not f for f in flags)


def distortion_check(a, b, t, epsilon=None, rtol=1e-12):
    """Evaluate the three metric-distortion bounds of the stereographic projection on ``(a, b)``.

    * ``|pi(a) - pi(b)| >= dist(a, b) / 2`` always;
    * ``<= (1/2 + eps) dist(a, b)`` when both points lie in the south-polar
      cap of radius ``near_pole_delta(eps)`` (only evaluated if ``epsilon``
      is given and the premise holds);
    * ``<= (2 - t) / (1 - t)^2 dist(a, b)`` when both heights are ``<= t``.

    A relative slack ``rtol`` absorbs rounding when ``a`` and ``b`` coincide.
    """
    a = check_sphere_points(a)[0]
    b = check_sphere_points(b, d=a.shape[0] - 1)[0]
    t = float(t)
    if not t < 1:
        raise ValueError("height cutoff t must be < 1")
    if a[-1] > t or b[-1] > t:
        raise DomainError(f"points must lie at height <= t={t}")
    geo = float(geodesic_distance(a, b))
    proj = float(np.linalg.norm(stereo_project(a) - stereo_project(b)))
    slack = rtol * max(geo, 1e-300) + 1e-15
    lower = 0.5 * geo
    general = (2.0 - t) / (1.0 - t) ** 2 * geo
    near_bound = near_ok = None
    if epsilon is not None:
        delta = near_pole_delta(epsilon)
        south = np.zeros_like(a)
        south[-1] = -1.0
        if geodesic_distance(a, south) < delta and geodesic_distance(b, south) < delta:
            near_bound = (0.5 + epsilon) * geo
            near_ok = proj <= near_bound + slack
    return DistortionReport(
        geodesic=geo,
        projected=proj,
        lower_bound=lower,
        lower_ok=proj >= lower - slack,
        near_pole_bound=near_bound,
        near_pole_ok=near_ok,
        general_bound=general,
        general_ok=proj <= general + slack,
    )


class StereographicProjection(TransformerMixin, BaseEstimator):
    """Transformer wrapper around :func:`stereo_project` / :func:`stereo_inverse`.

    ``scale`` multiplies the projected coordinates, so ``scale=2/alpha``
    gives the rescaled chart used to compare the Borsuk graph with
    continuum percolation near the south pole.
    """

    def __init__(self, scale=1.0):
        self.scale = scale

    def fit(self, X, y=None):
        X = check_sphere_points(X, allow_empty=False)
        self.n_features_in_ = X.shape[1]
        self.dimension_ = X.shape[1] - 1
        return self

    def transform(self, X):
        check_is_fitted(self, "dimension_")
        X = check_sphere_points(X, d=self.dimension_)
        return self.scale * stereo_project(X)

    def inverse_transform(self, Z):
        check_is_fitted(self, "dimension_")
        Z = check_projected_points(Z, self.dimension_)
        return stereo_inverse(np.asarray(Z) / self.scale)
