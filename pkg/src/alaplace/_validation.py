"""Input validation helpers shared by the estimators and the numerical kernels."""

import numbers

import numpy as np


class DomainError(ValueError):
    """An argument lies outside the domain of the requested operation."""


def check_nonneg(t, name="t"):
    """Return ``t`` as a float array, rejecting non-finite or negative entries."""
    arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")
    if np.any(arr < 0):
        raise DomainError(f"{name} must be nonnegative")
    return arr


def check_finite(x, name="x"):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} has non-finite entries")
    return arr


def check_vectors(x, name="x"):
    """Return an array of shape (..., n) with n >= 1 finite components."""
    arr = check_finite(x, name)
    if arr.ndim == 0:
        raise DomainError(f"{name} must be a vector")
    return arr


def check_positive_int(k, name, minimum=1):
    if not isinstance(k, numbers.Integral) or k < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {k!r}")
    return int(k)


def as_scalar_or_array(out, like):
    """Mirror the scalar-ness of ``like`` on ``out``."""
    if np.ndim(like) == 0:
        return float(out)
    return out


def check_random_state(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
