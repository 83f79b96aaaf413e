"""Quadrature, goodness-of-fit tests, envelope scans and rate fits.

Everything here evaluates targets through the unmetered
:meth:`TargetDensity.density`, so diagnostics never touch a run's budget.
"""

from dataclasses import dataclass

import numpy as np
from scipy import integrate, stats

from ._validation import check_dimension, check_points, check_positive
from .exceptions import InsufficientDataError, InvalidParameterError, SparseCellsError


@dataclass(frozen=True)
class GridSpec:
    """Tensor grid of ``points_per_axis`` nodes per axis on ``lower + [0, length]^d``."""

    lower: tuple
    length: float
    points_per_axis: int

    def __post_init__(self):
        lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        object.__setattr__(self, "lower", lower)
        check_positive(self.length, "length")
        d = check_dimension(len(lower))
        if d > 3:
            raise InvalidParameterError("grids are limited to d <= 3")
        if int(self.points_per_axis) != self.points_per_axis or self.points_per_axis < 2:
            raise InvalidParameterError(f"points_per_axis must be an integer >= 2, got "
                                        f"{self.points_per_axis!r}")
        object.__setattr__(self, "points_per_axis", int(self.points_per_axis))

    @classmethod
    def for_target(cls, target, points_per_axis):
        if not target.is_bounded:
            raise InvalidParameterError("grid needs a target with a box domain")
        return cls(tuple(target.lower), target.length, points_per_axis)

    @property
    def dimension(self):
        return len(self.lower)

    def axes(self, points_per_axis=None):
        k = points_per_axis or self.points_per_axis
        return [lo + np.linspace(0.0, self.length, k) for lo in self.lower]

    def points(self, points_per_axis=None):
        mesh = np.meshgrid(*self.axes(points_per_axis), indexing="ij")
        return np.stack(mesh, axis=-1).reshape(-1, self.dimension)


@dataclass(frozen=True)
class GofResult:
    statistic: float
    p_value: float
    n_samples: int


def _simpson_count(k):
    return k if k % 2 == 1 else k + 1


def integrate_grid(f, grid):
    """Composite Simpson tensor quadrature of ``f`` over the grid's box.

    ``f`` maps an (n, d) array to n values. An even node count is bumped by
    one so that the number of intervals is even.
    """
    k = _simpson_count(grid.points_per_axis)
    values = np.asarray(f(grid.points(k)), dtype=float).reshape((k,) * grid.dimension)
    for axis in grid.axes(k):
        values = integrate.simpson(values, x=axis, axis=0)
    return float(values)


def _cell_weights(n_cells, sub, length):
    """Matrix mapping fine-grid values to per-cell Simpson integrals along one axis."""
    h = length / (n_cells * sub)
    base = np.ones(sub + 1)
    base[1:-1:2], base[2:-1:2] = 4.0, 2.0
    W = np.zeros((n_cells, n_cells * sub + 1))
    for c in range(n_cells):
        W[c, c * sub:(c + 1) * sub + 1] = base * h / 3.0
    return W


def cell_masses(target, grid, sub=16):
    """Integral of the target over each grid cell; the grid nodes are the cell edges."""
    d = grid.dimension
    n_cells = grid.points_per_axis - 1
    fine = GridSpec(grid.lower, grid.length, n_cells * sub + 1)
    values = target.density(fine.points()).reshape((n_cells * sub + 1,) * d)
    W = _cell_weights(n_cells, sub, grid.length)
    for _ in range(d):
        values = np.moveaxis(np.tensordot(W, values, axes=(1, 0)), 0, -1)
    return values


def envelope_scan(target, prop, grid):
    """Largest ``f(x) - envelope(x)`` over the grid and where it occurs.

    A non-positive value means the envelope dominates the target at every
    grid node.
    """
    if grid.dimension != prop.dimension:
        raise InvalidParameterError("grid and proposal dimensions differ")
    X = grid.points()
    f = target.density(X)
    U = target.to_internal(X)
    if grid.dimension <= 2 and hasattr(prop, "kernel_factor"):
        axes = [ax - lo for ax, lo in zip(grid.axes(), target.lower)]
        env = prop.kernel_factor * prop.estimate.evaluate_grid(axes).ravel()
        env = np.where(prop.in_box(U), env + prop.slab_height, 0.0)
    else:
        env = prop.envelope(U)
    gap = f - env
    i = int(np.argmax(gap))
    return float(gap[i]), X[i]


def sup_error(estimate, target, grid):
    """Sup over grid nodes of ``|estimate - f|``; the estimate lives in internal coordinates."""
    X = grid.points()
    f = target.density(X)
    if grid.dimension <= 2:
        axes = [ax - lo for ax, lo in zip(grid.axes(), target.lower)]
        fh = estimate.evaluate_grid(axes).ravel()
    else:
        fh = estimate.evaluate(target.to_internal(X))
    return float(np.max(np.abs(fh - f)))


def ks_test(samples, cdf):
    """Two-sided Kolmogorov-Smirnov test with the asymptotic p-value."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 20:
        raise InsufficientDataError(f"need at least 20 samples, got {x.size}")
    res = stats.kstest(x, cdf, method="asymp")
    return GofResult(float(res.statistic), float(min(max(res.pvalue, 0.0), 1.0)), x.size)


def chi2_grid_test(samples, target, grid):
    """Pearson chi-square of sample counts in grid cells against the target's cell masses.

    The grid nodes are the cell edges, so ``points_per_axis = 11`` gives a
    10 x 10 table in two dimensions.
    """
    X = check_points(samples, grid.dimension, name="samples")
    edges = grid.axes()
    counts, _ = np.histogramdd(X, bins=edges)
    n_out = X.shape[0] - int(counts.sum())
    if n_out:
        raise InvalidParameterError(f"{n_out} samples fall outside the grid")
    masses = cell_masses(target, grid)
    expected = X.shape[0] * masses.ravel() / masses.sum()
    if np.any(expected < 5.0):
        raise SparseCellsError(f"minimum expected count {expected.min():.3g} is below 5")
    res = stats.chisquare(counts.ravel(), expected)
    return GofResult(float(res.statistic), float(res.pvalue), X.shape[0])


def rate_fit(sizes, errors):
    """Least-squares slope of ``log(error)`` against ``log(size)``."""
    sizes = np.asarray(sizes, dtype=float).ravel()
    errors = np.asarray(errors, dtype=float).ravel()
    if sizes.size < 3 or sizes.size != errors.size:
        raise InvalidParameterError("need at least 3 matching size/error pairs")
    if np.any(np.diff(sizes) <= 0) or sizes[0] <= 0:
        raise InvalidParameterError("sizes must be positive and strictly increasing")
    if np.any(errors <= 0):
        raise InvalidParameterError("errors must be positive")
    slope, _ = np.polyfit(np.log(sizes), np.log(errors), 1)
    return float(slope)
