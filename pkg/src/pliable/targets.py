"""Benchmark target densities and the evaluation budget meter.

A :class:`TargetDensity` wraps a pure, vectorized, non-negative function with
its domain. Box domains are ``lower + [0, A]^d``; samplers work in the shifted
coordinates ``[0, A]^d`` and report samples in the physical ones.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize
from scipy.interpolate import PchipInterpolator
from scipy.stats import norm

from ._validation import check_dimension, check_points, check_positive, check_smoothness
from .exceptions import (
    BudgetExhaustedError,
    DegenerateTargetError,
    InvalidParameterError,
)


class TargetDensity:
    """Unnormalized density with domain metadata.

    Parameters
    ----------
    func : callable
        Maps an (n, d) array of physical points to n non-negative values.
    dimension : int
    lower, length : array-like and float, optional
        Box domain ``lower + [0, length]^d``. Leave both unset for an
        unbounded domain.
    smoothness : float
        Declared Hölder exponent ``s`` in (0, 2].
    bound : float
        Declared upper bound ``c`` on the function.
    normalized : bool
        Whether the function integrates to one over its domain.
    mass : float, optional
        Known integral over the domain.
    """

    def __init__(self, func: Callable, dimension, lower=None, length=None, smoothness=2.0,
                 bound=1.0, normalized=False, mass=None, name="custom", params=None):
        self.func = func
        self.dimension = check_dimension(dimension)
        if (lower is None) != (length is None):
            raise InvalidParameterError("lower and length must be given together")
        if length is not None:
            self.length = check_positive(length, "length")
            self.lower = np.broadcast_to(np.asarray(lower, dtype=float), (self.dimension,)).copy()
        else:
            self.length = None
            self.lower = None
        self.smoothness = check_smoothness(smoothness)
        self.bound = check_positive(bound, "bound")
        self.normalized = bool(normalized)
        self.mass = None if mass is None else float(mass)
        self.name = name
        self.params = dict(params or {})

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"{self.name}({args})"

    @property
    def is_bounded(self):
        return self.length is not None

    @property
    def volume(self):
        return self.length ** self.dimension if self.is_bounded else np.inf

    def in_domain(self, X):
        X = check_points(X, self.dimension)
        if not self.is_bounded:
            return np.ones(X.shape[0], dtype=bool)
        U = X - self.lower
        return np.all((U >= 0.0) & (U <= self.length), axis=1)

    def to_internal(self, X):
        X = check_points(X, self.dimension)
        return X if self.lower is None else X - self.lower

    def to_physical(self, U):
        U = check_points(U, self.dimension)
        return U if self.lower is None else U + self.lower

    def density(self, X):
        """Unmetered evaluation at physical points; zero outside the box."""
        X = check_points(X, self.dimension)
        out = np.zeros(X.shape[0])
        inside = self.in_domain(X)
        if np.any(inside):
            out[inside] = self.func(X[inside])
        return out

    __call__ = density

    def restricted(self, lower, length):
        """Same function on the box ``lower + [0, length]^d``."""
        return TargetDensity(self.func, self.dimension, lower, length, self.smoothness,
                             self.bound, normalized=False, mass=None,
                             name=self.name, params={**self.params, "box_lower": lower,
                                                     "box_length": length})


class BudgetMeter:
    """Counts requests to a target; every in-domain evaluation costs one unit."""

    def __init__(self, limit):
        if limit < 0:
            raise InvalidParameterError(f"budget must be non-negative, got {limit!r}")
        self.limit = int(limit)
        self.used = 0

    @property
    def remaining(self):
        return self.limit - self.used

    def charge(self, k):
        k = int(k)
        if k > self.remaining:
            raise BudgetExhaustedError(f"request for {k} units exceeds remaining {self.remaining}")
        self.used += k

    def evaluate(self, target, X):
        """Metered evaluation at physical points; out-of-domain points are free zeros."""
        X = check_points(X, target.dimension)
        inside = target.in_domain(X)
        self.charge(np.count_nonzero(inside))
        out = np.zeros(X.shape[0])
        if np.any(inside):
            out[inside] = target.func(X[inside])
        return out


def uniform_target(d=1, length=1.0, value=1.0):
    """Constant function on ``[0, length]^d``."""
    d = check_dimension(d)
    value = check_positive(value, "value")

    def func(X):
        return np.full(X.shape[0], value)

    return TargetDensity(func, d, np.zeros(d), length, smoothness=2.0, bound=value,
                         normalized=np.isclose(value * length ** d, 1.0),
                         mass=value * length ** d, name="uniform",
                         params={"d": d, "length": length, "value": value})


def peakiness_target(a, A=10.0):
    """``exp(-x) / (1 + x) ** a`` on ``[0, A]``; ``a`` controls peakiness."""
    a = check_positive(a, "a")
    A = check_positive(A, "A")

    def func(X):
        x = X[:, 0]
        return np.exp(-x - a * np.log1p(x))

    mass = integrate.quad(lambda x: np.exp(-x) / (1.0 + x) ** a, 0.0, A, limit=200,
                          epsabs=1e-14, epsrel=1e-12)[0]
    return TargetDensity(func, 1, [0.0], A, smoothness=2.0, bound=1.0, mass=mass,
                         name="peakiness", params={"a": a, "A": A})


def sin2d_target():
    """``(1 + sin(4 pi x - pi/2)) (1 + sin(4 pi y - pi/2))`` on ``[0, 1]^2``."""

    def func(X):
        return (1.0 + np.sin(4.0 * np.pi * X[:, 0] - np.pi / 2)) * (
            1.0 + np.sin(4.0 * np.pi * X[:, 1] - np.pi / 2))

    return TargetDensity(func, 2, [0.0, 0.0], 1.0, smoothness=2.0, bound=4.0,
                         normalized=True, mass=1.0, name="sin2d")


def sin1d_target():
    """One factor of the 2-D sinusoid, ``1 - cos(4 pi x)`` on ``[0, 1]``.

    Vanishes with zero slope at both ends, so the regression estimate has no
    boundary bias; used for rate checks.
    """

    def func(X):
        return 1.0 + np.sin(4.0 * np.pi * X[:, 0] - np.pi / 2)

    return TargetDensity(func, 1, [0.0], 1.0, smoothness=2.0, bound=2.0,
                         normalized=True, mass=1.0, name="sin1d")


def gaussian_target(mean, sd=1.0, half_width=None):
    """Isotropic Gaussian density; unbounded unless ``half_width`` is given.

    Sub-Gaussian with ``f(x) <= c exp(-c' ||x - mean||^2)`` for
    ``c = (2 pi sd^2)^(-d/2)`` and ``c' = 1 / (2 sd^2)``.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    sd = check_positive(sd, "sd")
    d = mean.shape[0]
    peak = (2.0 * np.pi * sd * sd) ** (-d / 2.0)

    def func(X):
        z = (X - mean) / sd
        return peak * np.exp(-0.5 * np.einsum("ij,ij->i", z, z))

    params = {"mean": mean.tolist(), "sd": sd}
    if half_width is None:
        return TargetDensity(func, d, smoothness=2.0, bound=peak, normalized=True, mass=1.0,
                             name="gaussian", params=params)
    half_width = check_positive(half_width, "half_width")
    mass = (2.0 * norm.cdf(half_width / sd) - 1.0) ** d
    return TargetDensity(func, d, mean - half_width, 2.0 * half_width, smoothness=2.0,
                         bound=peak, mass=mass, name="gaussian",
                         params={**params, "half_width": half_width})


@dataclass(frozen=True)
class ClutterDataset:
    """Twenty observations, half in ``[-5, -3]^d`` and half in ``[2, 4]^d``."""

    points: np.ndarray
    gen_seed: Optional[int] = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, ndmin=2)
        if pts.shape[0] == 1 and pts.shape[1] == 20:
            pts = pts.T
        low = np.all((pts >= -5.0) & (pts <= -3.0), axis=1)
        high = np.all((pts >= 2.0) & (pts <= 4.0), axis=1)
        if pts.shape[0] != 20 or low.sum() != 10 or high.sum() != 10:
            raise InvalidParameterError(
                "clutter data needs 10 points in [-5,-3]^d and 10 in [2,4]^d")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def dimension(self):
        return self.points.shape[1]


def clutter_data_gen(d, rng=None):
    """Ten points uniform on ``[-5, -3]^d`` and ten uniform on ``[2, 4]^d``."""
    d = check_dimension(d)
    seed = rng if isinstance(rng, (int, np.integer)) else None
    rng = np.random.default_rng(rng)
    pts = np.vstack([rng.uniform(-5.0, -3.0, (10, d)), rng.uniform(2.0, 4.0, (10, d))])
    return ClutterDataset(pts, seed)


def _clutter_log_posterior(theta, data, w, clutter_var, prior_var):
    d = data.shape[1]
    diff = data[None, :, :] - theta[:, None, :]
    log_signal = -0.5 * np.sum(diff * diff, axis=2) - 0.5 * d * np.log(2 * np.pi)
    log_clutter = (-0.5 * np.sum(data * data, axis=1) / clutter_var
                   - 0.5 * d * np.log(2 * np.pi * clutter_var))
    terms = np.logaddexp(np.log1p(-w) + log_signal if w < 1 else -np.inf,
                         np.log(w) + log_clutter[None, :] if w > 0 else -np.inf)
    log_prior = (-0.5 * np.sum(theta * theta, axis=1) / prior_var
                 - 0.5 * d * np.log(2 * np.pi * prior_var))
    return log_prior + terms.sum(axis=1)


def clutter_target(d=1, data=None, w=0.5, clutter_var=10.0, prior_var=100.0, half_width=10.0):
    """Posterior of a Gaussian mean under a Gaussian-plus-clutter likelihood.

    ``p(theta) ~ N(theta; 0, prior_var I) * prod_i [(1 - w) N(x_i; theta, I)
    + w N(x_i; 0, clutter_var I)]`` on ``[-half_width, half_width]^d``. The
    function is rescaled so that its maximum over the box is one.
    """
    d = check_dimension(d)
    if data is None:
        data = clutter_data_gen(d, 0)
    if isinstance(data, ClutterDataset):
        pts, data_seed = data.points, data.gen_seed
    else:
        pts, data_seed = check_points(data, d, name="data"), None
    if pts.shape[1] != d:
        raise InvalidParameterError("dataset dimension does not match d")
    if not 0.0 <= w < 1.0:
        raise InvalidParameterError(f"w must lie in [0, 1), got {w!r}")
    clutter_var = check_positive(clutter_var, "clutter_var")
    prior_var = check_positive(prior_var, "prior_var")
    B = check_positive(half_width, "half_width")

    def logp(theta):
        return _clutter_log_posterior(np.atleast_2d(theta), pts, w, clutter_var, prior_var)

    # peak by grid scan, refined locally from the best grid points
    per_axis = 20001 if d == 1 else 401
    axis = np.linspace(-B, B, per_axis)
    grid = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
    lg = np.concatenate([logp(grid[i:i + 100000]) for i in range(0, len(grid), 100000)])
    log_peak = lg.max()
    for i in np.argsort(lg)[-5:]:
        res = optimize.minimize(lambda t: -logp(t)[0], grid[i], method="L-BFGS-B",
                                bounds=[(-B, B)] * d)
        log_peak = max(log_peak, -res.fun)

    def func(X):
        return np.exp(logp(X) - log_peak)

    params = {"d": d, "w": w, "clutter_var": clutter_var, "prior_var": prior_var,
              "half_width": B, "data_seed": data_seed}
    target = TargetDensity(func, d, np.full(d, -B), 2.0 * B, smoothness=2.0, bound=1.0,
                           name="clutter", params=params)
    target.log_peak = float(log_peak)
    target.data = pts
    return target


def numeric_cdf(target, resolution=20000):
    """Normalized CDF of a 1-D box target by composite Simpson quadrature.

    Returns a monotone callable on physical coordinates, 0 left of the box and
    1 right of it.
    """
    if target.dimension != 1 or not target.is_bounded:
        raise InvalidParameterError("numeric_cdf needs a one-dimensional box target")
    m = int(resolution) + int(resolution) % 2
    lo = target.lower[0]
    x = np.linspace(lo, lo + target.length, m + 1)
    y = target.func(x[:, None])
    cum = integrate.cumulative_simpson(y, x=x, initial=0.0)
    total = cum[-1]
    if not total > 0:
        raise DegenerateTargetError("target has zero mass on its box")
    cum = np.maximum.accumulate(np.clip(cum / total, 0.0, 1.0))
    cum[-1] = 1.0
    interp = PchipInterpolator(x, cum, extrapolate=False)
    hi = x[-1]

    def cdf(t):
        t = np.asarray(t, dtype=float)
        out = np.where(t <= lo, 0.0, np.where(t >= hi, 1.0, 0.0))
        inside = (t > lo) & (t < hi)
        out = np.array(out, dtype=float)
        out[inside] = np.clip(interp(t[inside]), 0.0, 1.0)
        return out if out.ndim else float(out)

    cdf.total_mass = float(total)
    return cdf


TARGETS = {
    "peakiness": peakiness_target,
    "sin2d": sin2d_target,
    "sin1d": sin1d_target,
    "clutter": clutter_target,
    "gaussian": gaussian_target,
    "uniform": uniform_target,
}


def make_target(name, **params):
    """Build a named target; ``clutter`` accepts ``data_seed`` for its dataset."""
    if name not in TARGETS:
        raise InvalidParameterError(
            f"unknown target {name!r}; available: {', '.join(sorted(TARGETS))}")
    if name == "clutter":
        params = dict(params)
        d = int(params.pop("d", 1))
        seed = int(params.pop("data_seed", 0))
        return clutter_target(d, clutter_data_gen(d, seed), **params)
    return TARGETS[name](**params)
