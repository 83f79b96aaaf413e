"""Gaussian product kernels, bandwidth schedule and kernel estimators.

Two estimators share one representation, :class:`KernelEstimate`:

* the regression form, built from uniform design points on ``[0, A]^d`` and
  the target values there, ``A^d / (N h^d) * sum_i f(X_i) K((X_i - x) / h)``;
* the density form, built from samples of a density,
  ``1 / (N h^d) * sum_i K((X_i - x) / h)``, optionally zeroed outside a
  centred ball.

Both are sums of isotropic Gaussians, which is what makes them easy to
sample from.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import (
    check_rng,
    check_dimension,
    check_open_unit,
    check_points,
    check_positive,
    check_smoothness,
)
from .exceptions import InvalidParameterError, InvalidTargetError

SQRT_2PI = np.sqrt(2.0 * np.pi)

# Product-kernel contributions beyond this many bandwidths (sup norm) are
# below 1e-14 of the mode and may be dropped.
TRUNCATION_SIGMAS = 8.0

# Elements per dense (queries x centers) block.
_BLOCK = 2_000_000


@dataclass(frozen=True)
class KernelSpec:
    """Constants of a univariate density kernel of degree 2."""

    uniform_bound: float = 1.0
    second_moment: float = 1.0
    holder_constant: float = 4.0
    holder_exponent: float = 1.0

    def __post_init__(self):
        for name in ("uniform_bound", "second_moment", "holder_constant"):
            check_positive(getattr(self, name), name)
        if not 0.0 < self.holder_exponent <= 1.0:
            raise InvalidParameterError(
                f"holder_exponent must lie in (0, 1], got {self.holder_exponent!r}"
            )


GAUSSIAN_KERNEL = KernelSpec()


def gaussian_kernel_1d(u):
    """Standard normal density, elementwise."""
    u = np.asarray(u, dtype=float)
    return np.exp(-0.5 * u * u) / SQRT_2PI


def kernel_value(u, spec=GAUSSIAN_KERNEL):
    """Product Gaussian kernel ``prod_i K0(u_i)``.

    ``u`` may be one d-vector or an (n, d) array; returns a float or an array
    of n values. ``spec`` only carries the kernel's constants; the Gaussian is
    the one implemented kernel.
    """
    u = np.asarray(u, dtype=float)
    if u.ndim <= 1:
        u = np.atleast_1d(u)
        return float(np.exp(-0.5 * np.dot(u, u)) / SQRT_2PI ** u.shape[0])
    return np.exp(-0.5 * np.einsum("ij,ij->i", u, u)) / SQRT_2PI ** u.shape[1]


def bandwidth(N, A, delta, s, d):
    """Bandwidth schedule ``(log(N A / delta) / N) ** (1 / (2 s + d))``."""
    if N < 2:
        raise InvalidParameterError(f"N must be >= 2, got {N!r}")
    A = check_positive(A, "A")
    delta = check_open_unit(delta, "delta")
    s = check_smoothness(s)
    d = check_dimension(d)
    arg = N * A / delta
    if arg <= 1.0:
        raise InvalidParameterError(f"log(N A / delta) must be positive, got N A / delta = {arg!r}")
    return float((np.log(arg) / N) ** (1.0 / (2.0 * s + d)))


def _sorted_kernel_sum(x, c, w, chunk=64, block=4096):
    """``sum_j w_j K0(x_i - c_j)`` for all i, skipping pairs more than
    ``TRUNCATION_SIGMAS`` apart (inputs already divided by the bandwidth)."""
    corder = np.argsort(c, kind="stable")
    cs, ws = c[corder], w[corder]
    xorder = np.argsort(x, kind="stable")
    xs = x[xorder]
    acc = np.zeros(xs.shape[0])
    for start in range(0, xs.shape[0], chunk):
        q = xs[start:start + chunk]
        lo = np.searchsorted(cs, q[0] - TRUNCATION_SIGMAS)
        hi = np.searchsorted(cs, q[-1] + TRUNCATION_SIGMAS, side="right")
        for b in range(lo, hi, block):
            e = min(b + block, hi)
            u = np.subtract.outer(q, cs[b:e])
            u *= u
            u *= -0.5
            np.exp(u, out=u)
            acc[start:start + chunk] += u @ ws[b:e]
    out = np.empty_like(acc)
    out[xorder] = acc / SQRT_2PI
    return out


@dataclass(frozen=True, eq=False)
class KernelEstimate:
    """A weighted sum of isotropic Gaussian kernels.

    ``evaluate(x) = scale * sum_i weights[i] * K((centers[i] - x) / bandwidth)``,
    multiplied by ``1{||x||_2 <= truncation_radius}`` when a radius is set.
    """

    centers: np.ndarray
    weights: np.ndarray
    bandwidth: float
    scale: float
    truncation_radius: Optional[float] = None
    _total_weight: float = field(init=False, repr=False)

    def __post_init__(self):
        centers = np.array(self.centers, dtype=float, ndmin=2)
        weights = np.array(self.weights, dtype=float).ravel()
        if centers.shape[0] != weights.shape[0]:
            raise InvalidParameterError("centers and weights differ in length")
        if centers.shape[0] == 0:
            raise InvalidParameterError("an estimate needs at least one center")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise InvalidParameterError("weights must be finite and non-negative")
        check_positive(self.bandwidth, "bandwidth")
        check_positive(self.scale, "scale")
        if self.truncation_radius is not None:
            check_positive(self.truncation_radius, "truncation_radius")
        centers.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "_total_weight", float(weights.sum()))

    @property
    def dimension(self):
        return self.centers.shape[1]

    @property
    def n_centers(self):
        return self.centers.shape[0]

    @property
    def mass(self):
        """Integral over R^d of the untruncated estimate."""
        return self.scale * self.bandwidth ** self.dimension * self._total_weight

    def component_probabilities(self):
        if self._total_weight == 0.0:
            return np.full(self.n_centers, 1.0 / self.n_centers)
        return self.weights / self._total_weight

    def evaluate(self, X):
        """Estimate at each row of ``X``; exact O(N) summation per point."""
        X = check_points(X, self.dimension)
        out = np.zeros(X.shape[0])
        if self._total_weight == 0.0 or X.shape[0] == 0:
            return out
        h = self.bandwidth
        C = self.centers / h
        w = self.weights
        step = max(1, _BLOCK // self.n_centers)
        for start in range(0, X.shape[0], step):
            Q = X[start:start + step] / h
            sq = np.zeros((Q.shape[0], C.shape[0]))
            for j in range(self.dimension):
                diff = Q[:, j, None] - C[None, :, j]
                sq += diff * diff
            out[start:start + step] = np.exp(-0.5 * sq) @ w
        out *= self.scale / SQRT_2PI ** self.dimension
        return self._apply_truncation(X, out)

    __call__ = evaluate

    def evaluate_grid(self, axes: Sequence[np.ndarray]):
        """Estimate on the tensor grid ``axes[0] x axes[1] x ...``.

        In one dimension, pairs more than ``TRUNCATION_SIGMAS`` bandwidths
        apart are skipped (relative contribution below 1e-14). Otherwise uses the product structure of the kernel: in two dimensions the grid
        values are ``K_0 diag(w) K_1^T`` with ``K_j`` the per-axis kernel
        matrices, so the cost is a matrix product instead of one exponential
        per (grid point, center) pair.
        """
        axes = [np.asarray(a, dtype=float).ravel() for a in axes]
        d = self.dimension
        if len(axes) != d:
            raise InvalidParameterError(f"expected {d} axes, got {len(axes)}")
        shape = tuple(len(a) for a in axes)
        if d > 2:
            mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
            return self.evaluate(mesh).reshape(shape)
        h = self.bandwidth
        if d == 1:
            out = _sorted_kernel_sum(axes[0] / h, self.centers[:, 0] / h, self.weights)
        else:
            out = np.zeros(shape)
            step = max(1, _BLOCK // max(shape))
            for start in range(0, self.n_centers, step):
                C = self.centers[start:start + step]
                w = self.weights[start:start + step]
                K0 = gaussian_kernel_1d((axes[0][:, None] - C[None, :, 0]) / h)
                K1 = gaussian_kernel_1d((axes[1][:, None] - C[None, :, 1]) / h)
                out += K0 @ (K1 * w).T
        out *= self.scale
        if self.truncation_radius is not None:
            mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
            out[np.linalg.norm(mesh, axis=-1) > self.truncation_radius] = 0.0
        return out

    def _apply_truncation(self, X, values):
        if self.truncation_radius is not None:
            values[np.linalg.norm(X, axis=1) > self.truncation_radius] = 0.0
        return values

    def sample_components(self, n, random_state=None):
        """Draw n points from the normalized untruncated mixture."""
        rng = check_rng(random_state)
        idx = rng.choice(self.n_centers, size=n, p=self.component_probabilities())
        return self.centers[idx] + self.bandwidth * rng.standard_normal((n, self.dimension))


def build_regression_estimate(points, values, h, A):
    """Regression-form estimate from design points on ``[0, A]^d``."""
    A = check_positive(A, "A")
    h = check_positive(h, "h")
    points = check_points(points, name="points")
    values = np.asarray(values, dtype=float).ravel()
    if points.shape[0] == 0:
        raise InvalidParameterError("empty point set")
    if values.shape[0] != points.shape[0]:
        raise InvalidParameterError("points and values differ in length")
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise InvalidTargetError("target values must be finite and non-negative")
    if np.any(points < 0) or np.any(points > A):
        raise InvalidParameterError(f"design points must lie in [0, {A}]^d")
    N, d = points.shape
    return KernelEstimate(points, values, h, A ** d / (N * h ** d))


def build_density_estimate(points, h, truncation_radius=None):
    """Density-form estimate with unit weights, zero outside the radius."""
    h = check_positive(h, "h")
    points = check_points(points, name="points")
    if points.shape[0] == 0:
        raise InvalidParameterError("empty point set")
    N, d = points.shape
    return KernelEstimate(points, np.ones(N), h, 1.0 / (N * h ** d), truncation_radius)


def eval_estimate(est, x):
    """Evaluate an estimate at one point (float) or at rows of an array."""
    x = np.asarray(x, dtype=float)
    if x.ndim <= 1 and x.size == est.dimension:
        return float(est.evaluate(x.reshape(1, -1))[0])
    return est.evaluate(x)


class KernelRegression(BaseEstimator):
    """Kernel regression of a non-negative function from uniform design points.

    Parameters
    ----------
    bandwidth : float or None
        Kernel bandwidth; ``None`` uses the schedule :func:`bandwidth`.
    domain_length : float
        Side ``A`` of the design box ``[0, A]^d``.
    delta : float
        Confidence parameter of the bandwidth schedule.
    smoothness : float
        Hölder exponent ``s`` in (0, 2] of the bandwidth schedule.
    """

    def __init__(self, bandwidth=None, domain_length=1.0, delta=0.01, smoothness=2.0):
        self.bandwidth = bandwidth
        self.domain_length = domain_length
        self.delta = delta
        self.smoothness = smoothness

    def fit(self, X, y):
        X = check_points(X)
        if X.shape[0] == 0:
            raise InvalidParameterError("empty point set")
        h = self.bandwidth
        if h is None:
            h = bandwidth(X.shape[0], self.domain_length, self.delta, self.smoothness, X.shape[1])
        self.estimate_ = build_regression_estimate(X, y, h, self.domain_length)
        self.bandwidth_ = self.estimate_.bandwidth
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "estimate_")
        return self.estimate_.evaluate(X)


class KernelDensity(BaseEstimator):
    """Gaussian kernel density estimate truncated to a centred ball.

    ``truncation_radius='auto'`` uses ``log N``; ``None`` disables the
    truncation. With ``bandwidth=None`` the schedule :func:`bandwidth` is used
    with ``A = 1`` and ``n_schedule`` (defaults to the sample count) as N.
    """

    def __init__(self, bandwidth=None, truncation_radius="auto", delta=0.01,
                 smoothness=2.0, n_schedule=None):
        self.bandwidth = bandwidth
        self.truncation_radius = truncation_radius
        self.delta = delta
        self.smoothness = smoothness
        self.n_schedule = n_schedule

    def fit(self, X, y=None):
        X = check_points(X)
        if X.shape[0] == 0:
            raise InvalidParameterError("empty point set")
        N = self.n_schedule if self.n_schedule is not None else X.shape[0]
        h = self.bandwidth
        if h is None:
            h = bandwidth(N, 1.0, self.delta, self.smoothness, X.shape[1])
        radius = self.truncation_radius
        if isinstance(radius, str):
            if radius != "auto":
                raise InvalidParameterError(f"unknown truncation_radius {radius!r}")
            radius = float(np.log(N))
        self.estimate_ = build_density_estimate(X, h, radius)
        self.bandwidth_ = h
        self.truncation_radius_ = radius
        self.n_features_in_ = X.shape[1]
        return self

    def density(self, X):
        check_is_fitted(self, "estimate_")
        return self.estimate_.evaluate(X)

    def score_samples(self, X):
        """Log density, ``-inf`` where the truncated estimate vanishes."""
        with np.errstate(divide="ignore"):
            return np.log(self.density(X))

    def sample(self, n_samples=1, random_state=None):
        check_is_fitted(self, "estimate_")
        return self.estimate_.sample_components(n_samples, random_state)
