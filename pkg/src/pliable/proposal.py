"""Pliable proposals: kernel estimate plus a uniform slab, and the extended
variant for unbounded targets.

All compact-mode quantities live in the shifted box ``[0, A]^d``. The
rejection test is run against the unnormalized envelope: since the proposal
density is ``envelope / Z``, comparing ``u * envelope(y)`` with ``f(y)`` is the
same test as using the normalized proposal with constant ``Z``.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special
from scipy.interpolate import CubicSpline, RectBivariateSpline
from scipy.stats import ncx2, norm

from ._validation import (
    check_rng,
    check_dimension,
    check_open_unit,
    check_points,
    check_positive,
    check_smoothness,
)
from .exceptions import (
    DegenerateProposalError,
    DegenerateTargetWarning,
    InsufficientMassError,
    InvalidParameterError,
)


def empirical_mass(values, A, d):
    """Monte Carlo estimate ``A^d / N * sum(values)`` of the target's integral."""
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        raise InvalidParameterError("empty value list")
    if np.any(values < 0):
        raise InvalidParameterError("values must be non-negative")
    m = float(check_positive(A, "A") ** check_dimension(d) * values.mean())
    if m == 0.0:
        warnings.warn("all target values are zero; the proposal collapses to the uniform slab",
                      DegenerateTargetWarning, stacklevel=2)
    return m


def radius_r(N, A, d, s, delta, hc):
    """Slab mass ``A^d * hc * (log(N A d / delta) / N) ** (s / (2 s + d))``."""
    A = check_positive(A, "A")
    d = check_dimension(d)
    s = check_smoothness(s)
    delta = check_open_unit(delta, "delta")
    hc = check_positive(hc, "hc", allow_zero=True)
    arg = N * A * d / delta
    if N < 1 or arg <= 1.0:
        raise InvalidParameterError(f"log(N A d / delta) must be positive, got argument {arg!r}")
    if hc == 0.0:
        warnings.warn("hc = 0: the kernel estimate is trusted exactly", UserWarning, stacklevel=2)
    return float(A ** d * hc * (np.log(arg) / N) ** (s / (2.0 * s + d)))


def rejection_constant(m_hat, r):
    """Empirical rejection constant ``(m_hat + r) / (m_hat - 5 r)``."""
    if r < 0:
        raise InvalidParameterError(f"r must be non-negative, got {r!r}")
    if m_hat - 5.0 * r <= 0:
        raise InsufficientMassError(
            f"empirical mass {m_hat:.6g} does not exceed 5 r = {5.0 * r:.6g}")
    return float((m_hat + r) / (m_hat - 5.0 * r))


@dataclass(frozen=True)
class IsotropicGaussian:
    """``N(mean, sd^2 I_d)``; the supported initial proposal family."""

    mean: np.ndarray
    sd: float

    def __post_init__(self):
        object.__setattr__(self, "mean", np.atleast_1d(np.asarray(self.mean, dtype=float)))
        check_positive(self.sd, "sd")

    @property
    def dimension(self):
        return self.mean.shape[0]

    def pdf(self, X):
        X = check_points(X, self.dimension)
        z = (X - self.mean) / self.sd
        return (np.exp(-0.5 * np.einsum("ij,ij->i", z, z))
                / (2.0 * np.pi * self.sd ** 2) ** (self.dimension / 2.0))

    def sample(self, n, random_state=None):
        rng = check_rng(random_state)
        return self.mean + self.sd * rng.standard_normal((n, self.dimension))

    def sample_outside(self, n, radius, random_state=None):
        """Draws conditioned on ``||x||_2 >= radius``."""
        rng = check_rng(random_state)
        d = self.dimension
        if n == 0:
            return np.empty((0, d))
        if np.any(self.mean != 0.0):
            out = []
            while sum(len(o) for o in out) < n:
                x = self.sample(4 * n + 64, rng)
                out.append(x[np.linalg.norm(x, axis=1) >= radius])
            return np.vstack(out)[:n]
        tail = special.gammaincc(d / 2.0, 0.5 * (radius / self.sd) ** 2)
        v = rng.random(n) * tail
        r = self.sd * np.sqrt(2.0 * special.gammainccinv(d / 2.0, v))
        direction = rng.standard_normal((n, d))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        return r[:, None] * direction


def tail_mass_gaussian(g, radius):
    """Mass of ``g`` outside the centred ball of the given radius."""
    if not isinstance(g, IsotropicGaussian):
        raise NotImplementedError(f"tail mass is only available for IsotropicGaussian, got {g!r}")
    if radius <= 0:
        return 1.0
    d = g.dimension
    if not np.any(g.mean != 0.0):
        if d == 1:
            return float(special.erfc(radius / (g.sd * np.sqrt(2.0))))
        return float(special.gammaincc(d / 2.0, 0.5 * (radius / g.sd) ** 2))
    nc = float(np.dot(g.mean, g.mean)) / g.sd ** 2
    return float(ncx2.sf((radius / g.sd) ** 2, d, nc))


def ball_volume(d, radius):
    return float(np.pi ** (d / 2.0) / special.gamma(d / 2.0 + 1.0) * radius ** d)


def _sample_ball(n, d, radius, rng):
    direction = rng.standard_normal((n, d))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    return direction * (radius * rng.random(n) ** (1.0 / d))[:, None]


class PliableProposal:
    """Mixture of the kernel estimate and a uniform slab on ``[0, A]^d``.

    The envelope is ``(m_hat / mass(f_hat)) f_hat(x) + r / A^d`` inside the box
    and zero outside; the proposal density is the Gaussian mixture
    (everywhere) plus the slab, divided by ``Z = m_hat + r``. Outside
    normalized mode ``m_hat`` equals the estimate's own mass, so the kernel
    factor is exactly one.
    """

    def __init__(self, estimate, r, m_hat, length):
        self.estimate = estimate
        self.r = check_positive(r, "r", allow_zero=True)
        self.m_hat = check_positive(m_hat, "m_hat", allow_zero=True)
        self.length = check_positive(length, "length")
        self.normalizer = self.m_hat + self.r
        if self.normalizer <= 0:
            raise DegenerateProposalError("m_hat + r must be positive")
        mass = estimate.mass
        self.kernel_factor = self.m_hat / mass if mass > 0 else 0.0
        if self.kernel_factor == 0.0:
            self.m_hat = 0.0
            self.normalizer = self.r
            if self.r <= 0:
                raise DegenerateProposalError("zero estimate and zero slab")

    @property
    def dimension(self):
        return self.estimate.dimension

    @property
    def slab_height(self):
        return self.r / self.length ** self.dimension

    @property
    def slab_probability(self):
        return self.r / self.normalizer

    def in_box(self, U):
        return np.all((U >= 0.0) & (U <= self.length), axis=1)

    def envelope(self, U):
        U = check_points(U, self.dimension)
        out = np.zeros(U.shape[0])
        inside = self.in_box(U)
        if np.any(inside):
            kern = self.estimate.evaluate(U[inside]) if self.kernel_factor else 0.0
            out[inside] = self.kernel_factor * kern + self.slab_height
        return out

    def density(self, U):
        """Normalized proposal density on R^d."""
        U = check_points(U, self.dimension)
        kern = self.kernel_factor * self.estimate.evaluate(U) if self.kernel_factor else 0.0
        return (kern + self.slab_height * self.in_box(U)) / self.normalizer

    def sample(self, n, random_state=None, return_slab=False):
        """n draws from the mixture; Gaussian draws may leave the box.

        With ``return_slab`` also returns the mask of draws taken from the
        uniform slab.
        """
        rng = check_rng(random_state)
        d = self.dimension
        slab = rng.random(n) < self.slab_probability
        out = np.empty((n, d))
        k = int(np.count_nonzero(~slab))
        if k:
            out[~slab] = self.estimate.sample_components(k, rng)
        out[slab] = self.length * rng.random((n - k, d))
        return (out, slab) if return_slab else out

    def make_decider(self, n_queries, mode="auto", random_state=0):
        return EnvelopeDecider(self, n_queries, mode, random_state)


def build_pliable_proposal(est, r, m_hat, length=None):
    """Compact pliable proposal; ``length`` defaults to the side implied by the
    regression estimate's scale ``A^d / (N h^d)``."""
    if length is None:
        volume = est.scale * est.n_centers * est.bandwidth ** est.dimension
        length = volume ** (1.0 / est.dimension)
    return PliableProposal(est, r, m_hat, length)


def envelope(prop, x):
    x = np.asarray(x, dtype=float)
    if x.ndim <= 1 and x.size == prop.dimension:
        return float(prop.envelope(x.reshape(1, -1))[0])
    return prop.envelope(x)


def sample_proposal(prop, rng):
    """One draw from the proposal mixture."""
    return prop.sample(1, rng)[0]


class ExtendedPliableProposal:
    """Truncated density estimate, uniform slab on a ball, Gaussian tail.

    Envelope ``f_tilde(x) + r / V * 1{||x|| <= R_ball} + M g(x) 1{||x|| >= R_tail}``.
    The kernel component is drawn from the untruncated mixture conditioned on
    the truncation ball, so the normalizer uses its exact in-ball mass.
    """

    def __init__(self, estimate, r, ball_radius, g, M, tail_radius):
        if estimate.truncation_radius is None:
            raise InvalidParameterError("extended proposal needs a truncated estimate")
        self.estimate = estimate
        self.r = check_positive(r, "r", allow_zero=True)
        self.ball_radius = check_positive(ball_radius, "ball_radius")
        self.g = g
        self.M = check_positive(M, "M")
        self.tail_radius = check_positive(tail_radius, "tail_radius")
        d = estimate.dimension
        self.ball_volume = ball_volume(d, self.ball_radius)
        self.tail_mass = tail_mass_gaussian(g, self.tail_radius)
        self.kernel_mass = self._kernel_mass_in_ball()
        self.normalizer = self.kernel_mass + self.r + self.M * self.tail_mass
        self.nominal_normalizer = 1.0 + self.r + self.M * self.tail_mass

    @property
    def dimension(self):
        return self.estimate.dimension

    def _kernel_mass_in_ball(self):
        est = self.estimate
        R, h = est.truncation_radius, est.bandwidth
        if est.dimension == 1:
            c = est.centers[:, 0]
            p = norm.cdf((R - c) / h) - norm.cdf((-R - c) / h)
        else:
            nc = np.einsum("ij,ij->i", est.centers, est.centers) / h ** 2
            p = ncx2.cdf((R / h) ** 2, est.dimension, nc)
        return float(est.mass * np.dot(est.component_probabilities(), p))

    def envelope(self, X):
        X = check_points(X, self.dimension)
        radius = np.linalg.norm(X, axis=1)
        out = self.estimate.evaluate(X)
        out += (self.r / self.ball_volume) * (radius <= self.ball_radius)
        tail = radius >= self.tail_radius
        if np.any(tail):
            out[tail] += self.M * self.g.pdf(X[tail])
        return out

    def density(self, X):
        return self.envelope(X) / self.normalizer

    def sample(self, n, random_state=None):
        rng = check_rng(random_state)
        d = self.dimension
        p = np.array([self.kernel_mass, self.r, self.M * self.tail_mass]) / self.normalizer
        which = rng.choice(3, size=n, p=p)
        out = np.empty((n, d))
        k = np.flatnonzero(which == 0)
        if k.size:
            out[k] = self._sample_truncated_kernel(k.size, rng)
        s = np.flatnonzero(which == 1)
        out[s] = _sample_ball(s.size, d, self.ball_radius, rng)
        t = np.flatnonzero(which == 2)
        out[t] = self.g.sample_outside(t.size, self.tail_radius, rng)
        return out

    def _sample_truncated_kernel(self, n, rng):
        R = self.estimate.truncation_radius
        chunks, got = [], 0
        while got < n:
            x = self.estimate.sample_components(n - got + 16, rng)
            x = x[np.linalg.norm(x, axis=1) <= R]
            chunks.append(x)
            got += x.shape[0]
        return np.vstack(chunks)[:n]

    def make_decider(self, n_queries, mode="auto", random_state=0):
        return EnvelopeDecider(self, n_queries, "exact", random_state)


def accept_test(envelope_value, f_value, u):
    """Return ``(accept, violation)`` for one rejection step.

    Accepts iff ``u * envelope_value <= f_value``; flags a violation when the
    envelope fails to dominate ``f``. Works elementwise on arrays.
    """
    envelope_value = np.asarray(envelope_value, dtype=float)
    f_value = np.asarray(f_value, dtype=float)
    accept = np.asarray(u) * envelope_value <= f_value
    violation = f_value > envelope_value
    if accept.ndim == 0:
        return bool(accept), bool(violation)
    return accept, violation


# Work (queries x centers) below which the envelope is always summed exactly.
_EXACT_WORK = 5e7


class EnvelopeDecider:
    """Accept/violation decisions against a proposal's envelope.

    In ``grid`` mode the envelope of a compact proposal in one or two
    dimensions is replaced by a cubic spline through exact tensor-grid values.
    The spline's error is measured on random probe points; any decision that
    could flip within a safety multiple of that error is recomputed with the
    exact sum, so the decisions match exact evaluation.
    """

    SAFETY = 20.0
    N_PROBES = 1024

    def __init__(self, proposal, n_queries, mode="auto", random_state=0):
        if mode not in ("auto", "exact", "grid"):
            raise InvalidParameterError(f"unknown envelope mode {mode!r}")
        self.proposal = proposal
        est = proposal.estimate
        compact = isinstance(proposal, PliableProposal)
        if mode == "auto":
            big = n_queries * est.n_centers > _EXACT_WORK
            mode = "grid" if compact and big and est.dimension <= 2 and proposal.kernel_factor else "exact"
        if mode == "grid" and not (compact and est.dimension <= 2):
            raise InvalidParameterError("grid mode needs a compact proposal with d <= 2")
        self.mode = mode
        self.n_exact = 0
        if mode == "grid":
            self._build_surrogate(check_rng(random_state))

    def _build_surrogate(self, rng):
        prop = self.proposal
        est, A, d = prop.estimate, prop.length, prop.dimension
        per_axis_cap = 200_001 if d == 1 else 1025
        spacing = est.bandwidth / (16.0 if d == 1 else 8.0)
        G = int(min(per_axis_cap, max(65, np.ceil(A / spacing) + 1)))
        axis = np.linspace(0.0, A, G)
        values = prop.kernel_factor * est.evaluate_grid([axis] * d)
        if d == 1:
            spline = CubicSpline(axis, values)
            self._kernel = lambda U: spline(U[:, 0])
        else:
            spline = RectBivariateSpline(axis, axis, values, kx=3, ky=3, s=0)
            self._kernel = lambda U: spline.ev(U[:, 0], U[:, 1])
        probes = A * rng.random((self.N_PROBES, d))
        exact = prop.kernel_factor * est.evaluate(probes)
        err = np.max(np.abs(self._kernel(probes) - exact))
        self.grid_points = G
        self.tolerance = self.SAFETY * err + 1e-12 * max(1.0, float(values.max()))

    def decide(self, U, f_values, u):
        """Boolean arrays ``(accept, violation)`` for in-domain points ``U``."""
        U = check_points(U, self.proposal.dimension)
        if self.mode == "exact":
            self.n_exact += U.shape[0]
            return accept_test(self.proposal.envelope(U), f_values, u)
        approx = self._kernel(U) + self.proposal.slab_height
        lo, hi = approx - self.tolerance, approx + self.tolerance
        accept = u * hi <= f_values
        violation = f_values > hi
        unsure = ~accept & (u * lo <= f_values) | ~violation & (f_values > lo)
        if np.any(unsure):
            idx = np.flatnonzero(unsure)
            self.n_exact += idx.size
            a, v = accept_test(self.proposal.envelope(U[idx]), f_values[idx], u[idx])
            accept[idx] = a
            violation[idx] = v
        return accept, violation
