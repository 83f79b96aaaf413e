"""Input validation helpers shared by the estimators and samplers."""

import numbers

import numpy as np
from sklearn.utils import check_array

from .exceptions import InvalidParameterError


def check_points(X, d=None, name="X"):
    """Return ``X`` as a finite 2-D float array of shape (n, d).

    A 1-D input is read as n points in one dimension when ``d`` is 1 or
    unknown, and as a single point when ``d`` matches its length.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 0:
        X = X.reshape(1, 1)
    elif X.ndim == 1:
        if d is not None and d > 1 and X.shape[0] == d:
            X = X.reshape(1, d)
        else:
            X = X.reshape(-1, 1)
    X = check_array(X, ensure_2d=True, ensure_min_samples=0, input_name=name)
    if d is not None and X.shape[1] != d:
        raise InvalidParameterError(f"{name} has dimension {X.shape[1]}, expected {d}")
    return X


def check_positive(value, name, allow_zero=False):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise InvalidParameterError(f"{name} must be a finite real, got {value!r}")
    if value < 0 or (value == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise InvalidParameterError(f"{name} must be {bound}, got {value!r}")
    return float(value)


def check_open_unit(value, name):
    if not isinstance(value, numbers.Real) or not 0.0 < value < 1.0:
        raise InvalidParameterError(f"{name} must lie in (0, 1), got {value!r}")
    return float(value)


def check_smoothness(s):
    if not isinstance(s, numbers.Real) or not 0.0 < s <= 2.0:
        raise InvalidParameterError(f"smoothness must lie in (0, 2], got {s!r}")
    return float(s)


def check_dimension(d):
    if not isinstance(d, numbers.Integral) or d < 1:
        raise InvalidParameterError(f"dimension must be a positive integer, got {d!r}")
    return int(d)


def round_half_up(x):
    return int(np.floor(x + 0.5))


def check_rng(random_state):
    """A numpy Generator from a seed, SeedSequence, Generator or None."""
    if isinstance(random_state, np.random.RandomState):
        raise InvalidParameterError("legacy RandomState is not supported; pass a Generator or seed")
    return np.random.default_rng(random_state)
