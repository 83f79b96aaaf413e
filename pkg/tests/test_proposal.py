import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from pliable.diagnostics import GridSpec, envelope_scan, integrate_grid
from pliable.exceptions import (
    DegenerateProposalError,
    DegenerateTargetWarning,
    InsufficientMassError,
    InvalidParameterError,
)
from pliable.kernel import (
    KernelEstimate,
    bandwidth,
    build_density_estimate,
    build_regression_estimate,
)
from pliable.proposal import (
    EnvelopeDecider,
    ExtendedPliableProposal,
    IsotropicGaussian,
    PliableProposal,
    build_pliable_proposal,
    empirical_mass,
    envelope,
    radius_r,
    rejection_constant,
    sample_proposal,
    tail_mass_gaussian,
)
from pliable.targets import sin1d_target, sin2d_target


def zero_estimate(d=1, A=1.0):
    return build_regression_estimate(np.full((1, d), A / 2), [0.0], 0.1, A)


class TestEmpiricalMass:
    def test_constant(self):
        assert empirical_mass([1, 1, 1, 1], 1.0, 1) == 1.0

    def test_zero_values_warn(self):
        with pytest.warns(DegenerateTargetWarning):
            assert empirical_mass([0.0] * 5, 1.0, 1) == 0.0

    def test_sin2d_monte_carlo(self):
        X = np.random.default_rng(0).random((10_000, 2))
        assert empirical_mass(sin2d_target().density(X), 1.0, 2) == pytest.approx(1.0, abs=0.02)

    def test_scales_with_volume(self):
        assert empirical_mass([2.0, 4.0], 3.0, 2) == pytest.approx(27.0)

    def test_rejects_negative(self):
        with pytest.raises(InvalidParameterError):
            empirical_mass([1.0, -1.0], 1.0, 1)


class TestRadius:
    def test_reference_value(self):
        # (ln(1e6) / 1e4) ** (2/5), 30-digit mpmath evaluation
        assert radius_r(10_000, 1.0, 1, 2.0, 0.01, 1.0) == pytest.approx(0.0718036920457440,
                                                                        rel=1e-12)

    def test_zero_multiplier(self):
        with pytest.warns(UserWarning):
            assert radius_r(10_000, 1.0, 1, 2.0, 0.01, 0.0) == 0.0

    @given(hc=st.floats(1e-4, 1e3))
    def test_linear_in_multiplier(self, hc):
        r1 = radius_r(5000, 2.0, 2, 1.0, 0.05, hc)
        assert radius_r(5000, 2.0, 2, 1.0, 0.05, 2 * hc) == pytest.approx(2 * r1, rel=1e-12)

    def test_invalid_log_argument(self):
        with pytest.raises(InvalidParameterError):
            radius_r(1, 1e-3, 1, 2.0, 0.5, 1.0)


class TestRejectionConstant:
    def test_exact_limit(self):
        assert rejection_constant(1.0, 0.0) == 1.0

    def test_reference(self):
        assert rejection_constant(1.0, 0.01) == pytest.approx(1.01 / 0.95, rel=1e-14)

    def test_insufficient_mass(self):
        with pytest.raises(InsufficientMassError):
            rejection_constant(1.0, 0.2)

    @given(m=st.floats(0.1, 100), a=st.floats(0, 0.19), b=st.floats(0, 0.19))
    def test_monotone(self, m, a, b):
        lo, hi = sorted((a * m, b * m))
        assert rejection_constant(m, lo) <= rejection_constant(m, hi)
        assert rejection_constant(m, lo) >= rejection_constant(m * 1.5, lo)


class TestCompactProposal:
    def test_zero_estimate_is_uniform(self):
        prop = build_pliable_proposal(zero_estimate(), 0.3, 0.0)
        assert prop.slab_probability == 1.0
        passes = 0
        for seed in range(10):
            x = prop.sample(2000, seed)[:, 0]
            passes += stats.kstest(x, "uniform").pvalue > 0.01
        assert passes >= 9

    def test_normalized_mode_constants(self):
        X = np.random.default_rng(0).random((500, 1))
        est = build_regression_estimate(X, 1 - np.cos(4 * np.pi * X[:, 0]), 0.1, 1.0)
        prop = PliableProposal(est, 0.01, 1.0, 1.0)
        assert prop.normalizer == pytest.approx(1.01)
        assert prop.slab_probability == pytest.approx(0.01 / 1.01)

    def test_slab_fraction(self):
        est = KernelEstimate([[0.5]], [1.0], 0.1, 1.0 / 0.1)
        prop = PliableProposal(est, 1.0, 1.0, 1.0)
        _, slab = prop.sample(1_000_000, 0, return_slab=True)
        assert abs(slab.mean() - 0.5) < 0.002

    def test_single_center_gaussian(self):
        est = KernelEstimate([[0.5]], [1.0], 0.1, 1.0 / 0.1)
        prop = PliableProposal(est, 0.0, 1.0, 1.0)
        x = prop.sample(100_000, 1)[:, 0]
        assert abs(x.mean() - 0.5) < 3 * 0.1 / math.sqrt(x.size)
        assert stats.kstest(x, stats.norm(0.5, 0.1).cdf).pvalue > 0.001

    def test_component_frequencies(self):
        est = KernelEstimate([[0.2], [0.8]], [1.0, 3.0], 0.01, 1.0 / (2 * 0.01))
        prop = PliableProposal(est, 0.5, 2.0, 1.0)
        x, slab = prop.sample(1_000_000, 2, return_slab=True)
        p_slab = 0.5 / 2.5
        for observed, p in [(slab.mean(), p_slab),
                            (np.mean(~slab & (x[:, 0] < 0.5)), (1 - p_slab) * 0.25),
                            (np.mean(~slab & (x[:, 0] > 0.5)), (1 - p_slab) * 0.75)]:
            assert abs(observed - p) < 3 * math.sqrt(p * (1 - p) / x.shape[0])

    def test_degenerate(self):
        with pytest.raises(DegenerateProposalError):
            build_pliable_proposal(zero_estimate(), 0.0, 0.0)

    def test_sample_proposal_single_draw(self):
        prop = build_pliable_proposal(zero_estimate(2), 0.1, 0.0)
        assert sample_proposal(prop, np.random.default_rng(0)).shape == (2,)

    def test_uniform_slab_envelope(self):
        prop = build_pliable_proposal(zero_estimate(2), 0.1, 0.0)
        X = np.random.default_rng(0).random((100, 2))
        assert np.allclose(prop.envelope(X), 0.1)
        assert envelope(prop, [0.3, 0.3]) == pytest.approx(0.1)
        assert envelope(prop, [1.3, 0.3]) == 0.0

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), r=st.floats(0.0, 2.0), A=st.floats(0.5, 4.0))
    def test_envelope_floor(self, seed, r, A):
        rng = np.random.default_rng(seed)
        X = A * rng.random((50, 2))
        est = build_regression_estimate(X, rng.random(50), 0.3, A)
        prop = PliableProposal(est, r, est.mass, A)
        env = prop.envelope(A * rng.random((200, 2)))
        assert np.all(env >= r / A ** 2 - 1e-15)
        assert np.all(prop.envelope(A + rng.random((20, 2))) == 0.0)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), normalized=st.booleans())
    def test_normalizer_cancels(self, seed, normalized):
        rng = np.random.default_rng(seed)
        X = rng.random((40, 1))
        f = rng.random(40)
        est = build_regression_estimate(X, f, 0.2, 1.0)
        m_hat = 1.0 if normalized else empirical_mass(f, 1.0, 1)
        prop = PliableProposal(est, 0.05, m_hat, 1.0)
        U = rng.random((30, 1))
        target = rng.random(30)
        ratio_env = target / prop.envelope(U)
        ratio_density = target / (prop.normalizer * prop.density(U))
        assert np.allclose(ratio_env, ratio_density, rtol=1e-12)

    @pytest.mark.parametrize("d", [1, 2])
    def test_normalization(self, d):
        rng = np.random.default_rng(d)
        X = rng.random((300, d))
        est = build_regression_estimate(X, 1 + rng.random(300), 0.15, 1.0)
        prop = PliableProposal(est, 0.2, 1.0, 1.0)
        inside = integrate_grid(prop.density, GridSpec((0.0,) * d, 1.0, 401 if d == 2 else 4001))
        p_in = np.prod(stats.norm.cdf((1 - est.centers) / est.bandwidth)
                       - stats.norm.cdf(-est.centers / est.bandwidth), axis=1)
        outside = prop.kernel_factor * est.mass * (1 - est.component_probabilities() @ p_in)
        assert inside + outside / prop.normalizer == pytest.approx(1.0, abs=1e-4)

    def test_dominance_when_error_below_slab(self):
        target = sin1d_target()
        N = 50_000
        X = np.random.default_rng(0).random((N, 1))
        est = build_regression_estimate(X, target.density(X), 0.03, 1.0)
        grid = GridSpec((0.0,), 1.0, 2001)
        xs = grid.points()
        err = np.max(np.abs(est.evaluate_grid(grid.axes()).ravel() - target.density(xs)))
        prop = PliableProposal(est, 1.0001 * err, est.mass, 1.0)
        # kernel factor is one outside normalized mode, so the slab covers the error
        assert prop.kernel_factor == pytest.approx(1.0)
        assert np.all(prop.envelope(xs) >= target.density(xs))
        assert envelope_scan(target, prop, grid)[0] <= 0


class TestTailMass:
    def test_zero_radius(self):
        assert tail_mass_gaussian(IsotropicGaussian([0.0], 1.0), 0.0) == 1.0

    def test_two_sided_five_percent(self):
        g = IsotropicGaussian([0.0], 1.0)
        assert tail_mass_gaussian(g, 1.959964) == pytest.approx(0.05, abs=1e-7)

    def test_vanishes(self):
        assert tail_mass_gaussian(IsotropicGaussian([0.0, 0.0], 1.0), 60.0) == 0.0

    @pytest.mark.parametrize("mean", [[0.0, 0.0], [1.0, -0.5]])
    def test_2d_against_monte_carlo(self, mean):
        g = IsotropicGaussian(mean, 1.5)
        x = g.sample(400_000, 0)
        p = np.mean(np.linalg.norm(x, axis=1) >= 2.0)
        assert tail_mass_gaussian(g, 2.0) == pytest.approx(p, abs=4 * math.sqrt(p / 400_000))

    def test_unsupported_family(self):
        with pytest.raises(NotImplementedError):
            tail_mass_gaussian(stats.norm(0, 1), 1.0)

    @pytest.mark.parametrize("d", [1, 3])
    def test_sample_outside(self, d):
        g = IsotropicGaussian(np.zeros(d), 2.0)
        x = g.sample_outside(50_000, 3.0, 0)
        radius = np.linalg.norm(x, axis=1)
        assert radius.min() >= 3.0
        # conditional law of |x|^2 / sd^2: chi-square(d) truncated to >= (3 / 2)^2
        lo = stats.chi2.sf(2.25, d)
        cdf = lambda t: 1 - stats.chi2.sf(t, d) / lo  # noqa: E731
        assert stats.kstest((radius / 2.0) ** 2, cdf).pvalue > 0.001


class TestExtendedProposal:
    def make(self, r=0.3):
        X = np.random.default_rng(0).standard_normal((2000, 1))
        est = build_density_estimate(X, bandwidth(2000, 1.0, 0.01, 2.0, 1), math.log(2000))
        g = IsotropicGaussian([0.0], 2.0)
        return ExtendedPliableProposal(est, r, math.log(1e5), g, 2.0, math.log(2000))

    def test_envelope_terms(self):
        prop = self.make()
        rng = np.random.default_rng(1)
        x = rng.uniform(-14, 14, (300, 1))
        radius = np.abs(x[:, 0])
        est = prop.estimate
        kde = np.array([
            est.scale * sum(math.exp(-0.5 * ((c - xi) / est.bandwidth) ** 2)
                            for c in est.centers[:, 0]) / math.sqrt(2 * math.pi)
            if abs(xi) <= est.truncation_radius else 0.0 for xi in x[:, 0]])
        slab = np.where(radius <= prop.ball_radius, prop.r / (2 * prop.ball_radius), 0.0)
        tail = np.where(radius >= prop.tail_radius, 2.0 * stats.norm(0, 2).pdf(x[:, 0]), 0.0)
        assert np.allclose(prop.envelope(x), kde + slab + tail, rtol=1e-12)
        both = (radius >= prop.tail_radius) & (radius <= prop.ball_radius)
        assert both.any()

    def test_kernel_mass_in_ball(self):
        prop = self.make()
        axis = np.linspace(-prop.estimate.truncation_radius, prop.estimate.truncation_radius,
                           20001)
        mass = integrate.trapezoid(prop.estimate.evaluate(axis[:, None]), axis)
        assert prop.kernel_mass == pytest.approx(mass, abs=1e-6)

    def test_normalizers(self):
        prop = self.make()
        assert prop.nominal_normalizer == pytest.approx(1 + prop.r + 2.0 * prop.tail_mass)
        assert prop.normalizer <= prop.nominal_normalizer + 1e-12

    def test_density_integrates_to_one(self):
        prop = self.make()
        val = integrate_grid(prop.density, GridSpec((-30.0,), 60.0, 60001))
        assert val == pytest.approx(1.0, abs=1e-4)

    def test_sampling_matches_density(self):
        prop = self.make()
        x = prop.sample(200_000, 3)[:, 0]
        grid = np.linspace(-30, 30, 60001)
        cdf = np.cumsum(prop.density(grid[:, None])) * (grid[1] - grid[0])
        assert stats.kstest(x, lambda t: np.interp(t, grid, cdf)).pvalue > 0.001

    def test_needs_truncation(self):
        est = KernelEstimate([[0.0]], [1.0], 0.2, 5.0)
        with pytest.raises(InvalidParameterError):
            ExtendedPliableProposal(est, 0.1, 3.0, IsotropicGaussian([0.0], 1.0), 2.0, 2.0)


class TestEnvelopeDecider:
    @pytest.mark.parametrize("d,N", [(1, 3000), (2, 4000)])
    def test_grid_decisions_match_exact(self, d, N):
        target = sin2d_target() if d == 2 else sin1d_target()
        rng = np.random.default_rng(5)
        X = rng.random((N, d))
        est = build_regression_estimate(X, target.density(X), 0.05, 1.0)
        prop = PliableProposal(est, 0.05, 1.0, 1.0)
        U = rng.random((20_000, d))
        f = target.density(U)
        u = rng.random(20_000)
        grid = EnvelopeDecider(prop, 20_000, mode="grid")
        exact = EnvelopeDecider(prop, 20_000, mode="exact")
        a1, v1 = grid.decide(U, f, u)
        a2, v2 = exact.decide(U, f, u)
        assert np.array_equal(a1, a2) and np.array_equal(v1, v2)
        assert grid.n_exact < 20_000 // 10

    def test_auto_mode(self):
        prop = build_pliable_proposal(zero_estimate(), 0.1, 0.0)
        assert EnvelopeDecider(prop, 10).mode == "exact"

    def test_bad_mode(self):
        prop = build_pliable_proposal(zero_estimate(), 0.1, 0.0)
        with pytest.raises(InvalidParameterError):
            EnvelopeDecider(prop, 10, mode="fast")


def test_no_warnings_on_normal_use():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        radius_r(100, 1.0, 1, 2.0, 0.01, 0.5)
