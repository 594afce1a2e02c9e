"""Input validation helpers shared by the estimators and functions."""

import numbers

import numpy as np
from sklearn.utils.validation import check_array

NORM_TOL = 1e-12


def check_dimension(d, minimum=1):
    if not isinstance(d, numbers.Integral) or isinstance(d, bool):
        raise TypeError(f"dimension must be an integer, got {d!r}")
    if d < minimum:
        raise ValueError(f"dimension must be >= {minimum}, got {d}")
    return int(d)


def check_angle(alpha, name="alpha", upper=np.pi, include_upper=False):
    alpha = float(alpha)
    ok = 0.0 < alpha < upper or (include_upper and alpha == upper)
    if not ok:
        bracket = "]" if include_upper else ")"
        raise ValueError(f"{name} must lie in (0, {upper:g}{bracket}, got {alpha!r}")
    return alpha


def check_sphere_points(X, d=None, renormalize=True, allow_empty=True):
    """Validate an ``(n, d+1)`` array of unit vectors.

    Rows are re-normalised so that the unit-norm invariant holds to
    ``NORM_TOL`` even after serialisation round trips.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.size == 0:
        if not allow_empty:
            raise ValueError("empty point set")
        width = X.shape[1] if X.ndim == 2 and X.shape[1] > 0 else (d + 1 if d is not None else 0)
        return np.zeros((0, width))
    X = check_array(X, ensure_2d=True, dtype=np.float64, copy=renormalize)
    if X.shape[1] < 2:
        raise ValueError("sphere points need at least 2 coordinates (d >= 1)")
    if d is not None and X.shape[1] != d + 1:
        raise ValueError(f"expected {d + 1} coordinates per point, got {X.shape[1]}")
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms == 0):
        raise ValueError("zero vector cannot be normalised onto the sphere")
    if renormalize:
        X /= norms[:, None]
    return X


def check_projected_points(Z, d=None):
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z.reshape(1, -1)
    if Z.size == 0:
        return Z.reshape(0, Z.shape[1] if Z.ndim == 2 else (d or 0))
    Z = check_array(Z, ensure_2d=True, dtype=np.float64)
    if d is not None and Z.shape[1] != d:
        raise ValueError(f"expected {d} coordinates per projected point, got {Z.shape[1]}")
    return Z


def check_probability(p, name="p"):
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {p!r}")
    return p


def check_positive_int(k, name):
    if not isinstance(k, numbers.Integral) or isinstance(k, bool) or k < 1:
        raise ValueError(f"{name} must be a positive integer, got {k!r}")
    return int(k)
