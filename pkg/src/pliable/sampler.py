"""Rejection samplers: uniform-envelope baseline, pliable, and extended pliable.

Each sampler is an estimator whose ``fit(target)`` spends the estimation part
of the budget and whose ``sample()`` spends the rest, returning a
:class:`RunReport`. ``run(target)`` does both.

Random streams: the root seed feeds a :class:`numpy.random.SeedSequence`
that spawns one child per phase (design points, proposal draws, uniforms), so
changing a later phase never alters an earlier one.
"""

import time
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import (
    check_dimension,
    check_open_unit,
    check_positive,
    check_smoothness,
    round_half_up,
)
from .exceptions import (
    DegenerateProposalError,
    EstimationFailedError,
    InsufficientMassError,
    InvalidParameterError,
    MassConditionWarning,
)
from .kernel import bandwidth, build_density_estimate, build_regression_estimate
from .proposal import (
    ExtendedPliableProposal,
    IsotropicGaussian,
    PliableProposal,
    accept_test,
    ball_volume,
    empirical_mass,
    radius_r,
    rejection_constant,
)
from .targets import BudgetMeter

__all__ = [
    "RunReport",
    "SamplerConfig",
    "SimpleRejectionSampler",
    "PliableRejectionSampler",
    "ExtendedPliableRejectionSampler",
    "accept_test",
    "phase_split_prs",
    "eprs_schedule",
    "srs_run",
    "prs_run",
    "eprs_run",
]

BATCH = 100_000

# Consecutive batches without a single in-domain draw before giving up.
_MAX_EMPTY_BATCHES = 100


@dataclass(frozen=True)
class RunReport:
    """Outcome of one sampler run.

    ``acceptance_rate`` is ``accepted / draws`` where ``draws`` counts the
    budget-consuming draws of the final sampling phase.
    """

    method: str
    accepted: int
    budget_used: int
    phase1_N: int
    draws: int
    acceptance_rate: float
    rejection_constant: float
    envelope_violations: int
    oob_draws: int
    wall_millis: int
    samples: np.ndarray = field(repr=False)
    details: dict = field(default_factory=dict)

    @property
    def flagged(self):
        """True when the envelope failed somewhere, so exactness is not guaranteed."""
        return self.envelope_violations > 0

    def to_dict(self, include_samples=False):
        out = asdict(self)
        out.pop("samples")
        if include_samples:
            out["samples"] = self.samples.tolist()
        return out


@dataclass(frozen=True)
class SamplerConfig:
    """Run parameters shared by the function-style entry points."""

    n: int
    delta: float = 0.01
    s: float = 2.0
    hc: float = 1.0
    seed: Optional[int] = 0
    normalized: Optional[bool] = None
    free_oob: bool = False
    mass_check: str = "abort"
    eprs_mean: float = 0.0
    eprs_sd: float = 1.0
    eprs_m: Optional[float] = None
    eprs_he: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 4:
            raise InvalidParameterError(f"budget n must be an integer >= 4, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        check_open_unit(self.delta, "delta")
        check_smoothness(self.s)
        check_positive(self.hc, "hc", allow_zero=True)
        if self.eprs_m is not None and self.eprs_m < 1:
            raise InvalidParameterError(f"eprs_m must be >= 1, got {self.eprs_m!r}")
        check_positive(self.eprs_sd, "eprs_sd")
        check_positive(self.eprs_he, "eprs_he", allow_zero=True)


def phase_split_prs(n, s, d):
    """Estimation budget ``round(n ** ((2 s + d) / (3 s + d)))`` clamped to [1, n - 1]."""
    if n < 4:
        raise InvalidParameterError(f"n must be >= 4, got {n!r}")
    s = check_smoothness(s)
    d = check_dimension(d)
    N = round_half_up(n ** ((2.0 * s + d) / (3.0 * s + d)))
    return int(min(max(N, 1), n - 1))


def eprs_schedule(n, s, d, M, delta):
    """Return ``(T_s, N_bar)``: phase-one draws and the lower bound on accepted ones."""
    s = check_smoothness(s)
    d = check_dimension(d)
    delta = check_open_unit(delta, "delta")
    if M < 1:
        raise InvalidParameterError(f"M must be >= 1, got {M!r}")
    T = n ** ((2.0 * s + d) / (3.0 * s + d))
    N_bar = round_half_up(T / M - 2.0 * np.sqrt(T * np.log(1.0 / delta)))
    if N_bar < 2:
        raise InvalidParameterError(
            f"N_bar = {N_bar} < 2: budget {n} too small for M = {M} and delta = {delta}")
    return round_half_up(T), N_bar


def _streams(seed, k=3):
    return [np.random.default_rng(c) for c in np.random.SeedSequence(seed).spawn(k)]


def _rejection_phase(target, meter, propose, decide, rng_draw, rng_u, free_oob, in_domain):
    """Spend the remaining budget on proposal draws.

    ``propose(k, rng)`` returns k internal-coordinate draws, ``in_domain``
    masks the ones where the target must be evaluated and ``decide(U, f, u)``
    returns the accept and violation flags. Out-of-domain draws are rejected
    without evaluating the target; they are charged unless ``free_oob``.
    """
    kept, accepted, violations, oob, draws, empty = [], 0, 0, 0, 0, 0
    while meter.remaining > 0:
        k = min(BATCH, meter.remaining)
        U = propose(k, rng_draw)
        u = rng_u.random(k)
        inside = in_domain(U)
        n_in = int(np.count_nonzero(inside))
        n_out = k - n_in
        oob += n_out
        if not free_oob:
            meter.charge(n_out)
            draws += n_out
        elif n_in == 0:
            empty += 1
            if empty >= _MAX_EMPTY_BATCHES:
                raise DegenerateProposalError("proposal keeps drawing outside the domain")
            continue
        empty = 0
        if n_in == 0:
            continue
        Ui = U[inside]
        X = target.to_physical(Ui)
        f = meter.evaluate(target, X)
        draws += n_in
        acc, vio = decide(Ui, f, u[inside])
        accepted += int(np.count_nonzero(acc))
        violations += int(np.count_nonzero(vio))
        kept.append(X[acc])
    d = target.dimension
    samples = np.vstack(kept) if kept else np.empty((0, d))
    return samples, accepted, draws, violations, oob


def _check_target(target, bounded):
    if bounded and not target.is_bounded:
        raise InvalidParameterError(f"target {target!r} has no box domain")
    if not bounded and target.is_bounded:
        raise InvalidParameterError(f"target {target!r} must have an unbounded domain")


class _BaseSampler(BaseEstimator):
    def run(self, target):
        """Fit on ``target`` and spend the remaining budget; returns a RunReport."""
        return self.fit(target).sample()

    def _start(self, target):
        self.target_ = target
        self.meter_ = BudgetMeter(self.n_budget)
        self._t0 = time.perf_counter()

    def _elapsed_ms(self):
        return int(round(1000.0 * (time.perf_counter() - self._t0)))


class SimpleRejectionSampler(_BaseSampler):
    """Rejection sampling with a uniform proposal on the target's box.

    Parameters
    ----------
    n_budget : int
        Number of target evaluations.
    envelope_const : float or None
        Envelope mass ``c``; a draw is accepted iff ``u c / A^d <= f``.
        Defaults to the tight ``bound * A^d``.
    random_state : int or None
    """

    def __init__(self, n_budget=10_000, envelope_const=None, random_state=None):
        self.n_budget = n_budget
        self.envelope_const = envelope_const
        self.random_state = random_state

    def fit(self, target):
        _check_target(target, bounded=True)
        self._start(target)
        c = self.envelope_const
        if c is None:
            c = target.bound * target.volume
        self.envelope_const_ = check_positive(c, "envelope_const")
        self.envelope_height_ = self.envelope_const_ / target.volume
        self._rng_draw, self._rng_u = _streams(self.random_state, 2)
        return self

    def sample(self):
        check_is_fitted(self, "envelope_const_")
        t, d, A = self.target_, self.target_.dimension, self.target_.length
        height = self.envelope_height_
        samples, acc, draws, vio, oob = _rejection_phase(
            t, self.meter_,
            propose=lambda k, rng: A * rng.random((k, d)),
            decide=lambda U, f, u: accept_test(np.full(f.shape, height), f, u),
            rng_draw=self._rng_draw, rng_u=self._rng_u, free_oob=False,
            in_domain=lambda U: np.ones(U.shape[0], dtype=bool),
        )
        return RunReport(
            method="SRS", accepted=acc, budget_used=self.meter_.used, phase1_N=0, draws=draws,
            acceptance_rate=acc / draws if draws else 0.0,
            rejection_constant=self.envelope_const_, envelope_violations=vio, oob_draws=oob,
            wall_millis=self._elapsed_ms(), samples=samples,
        )


class PliableRejectionSampler(_BaseSampler):
    """Rejection sampling with a proposal learned from the first evaluations.

    ``fit`` evaluates the target at N uniform points of its box, builds the
    kernel regression estimate and the proposal; ``sample`` spends the rest of
    the budget.

    Parameters
    ----------
    n_budget : int
        Total number of target evaluations, estimation included.
    delta : float
        Confidence parameter in (0, 1).
    smoothness : float or None
        Hölder exponent in (0, 2]; defaults to the target's declared value.
    hc : float
        Multiplier of the slab mass.
    normalized : bool or None
        Pin the empirical mass to one; defaults to the target's flag.
    free_oob : bool
        Do not charge proposal draws that fall outside the box.
    envelope_eval : {'auto', 'exact', 'grid'}
        How the envelope is evaluated in the sampling phase; ``grid`` uses a
        certified spline surrogate (d <= 2) that reproduces exact decisions.
    mass_check : {'abort', 'warn'}
        What to do when the empirical mass does not exceed five slab masses:
        raise :class:`InsufficientMassError`, or warn and sample anyway with
        an infinite rejection constant.
    random_state : int or None
    """

    def __init__(self, n_budget=10_000, delta=0.01, smoothness=None, hc=1.0, normalized=None,
                 free_oob=False, envelope_eval="auto", mass_check="abort", random_state=None):
        self.n_budget = n_budget
        self.delta = delta
        self.smoothness = smoothness
        self.hc = hc
        self.normalized = normalized
        self.free_oob = free_oob
        self.envelope_eval = envelope_eval
        self.mass_check = mass_check
        self.random_state = random_state

    def fit(self, target):
        _check_target(target, bounded=True)
        if self.mass_check not in ("abort", "warn"):
            raise InvalidParameterError(f"mass_check must be 'abort' or 'warn', got {self.mass_check!r}")
        n, d, A = self.n_budget, target.dimension, target.length
        s = target.smoothness if self.smoothness is None else check_smoothness(self.smoothness)
        self._start(target)
        self._rng_design, self._rng_draw, self._rng_u = _streams(self.random_state)

        N = phase_split_prs(n, s, d)
        U = A * self._rng_design.random((N, d))
        values = self.meter_.evaluate(target, target.to_physical(U))

        h = bandwidth(N, A, self.delta, s, d)
        self.estimate_ = build_regression_estimate(U, values, h, A)
        r = radius_r(N, A, d, s, self.delta, self.hc)
        normalized = target.normalized if self.normalized is None else self.normalized
        m_hat = 1.0 if normalized else empirical_mass(values, A, d)
        try:
            self.rejection_constant_ = rejection_constant(m_hat, r)
        except InsufficientMassError as exc:
            exc.budget_used = self.meter_.used
            if self.mass_check == "abort":
                raise
            warnings.warn(f"{exc}; sampling anyway", MassConditionWarning, stacklevel=2)
            self.rejection_constant_ = float("inf")
        if np.isfinite(self.rejection_constant_) and 8.0 * r > m_hat:
            warnings.warn(f"8 r = {8 * r:.4g} exceeds the empirical mass {m_hat:.4g}",
                          MassConditionWarning, stacklevel=2)
        self.proposal_ = PliableProposal(self.estimate_, r, m_hat, A)
        self.phase1_N_, self.bandwidth_, self.r_, self.m_hat_ = N, h, r, m_hat
        self.smoothness_ = s
        return self

    def sample(self):
        check_is_fitted(self, "proposal_")
        prop = self.proposal_
        decider = prop.make_decider(self.meter_.remaining, self.envelope_eval, self.random_state)
        samples, acc, draws, vio, oob = _rejection_phase(
            self.target_, self.meter_, propose=prop.sample, decide=decider.decide,
            rng_draw=self._rng_draw, rng_u=self._rng_u, free_oob=self.free_oob,
            in_domain=lambda U: self.target_.in_domain(self.target_.to_physical(U)),
        )
        details = {
            "bandwidth": self.bandwidth_, "r": self.r_, "m_hat": self.m_hat_,
            "hc": self.hc, "s": self.smoothness_, "envelope_eval": decider.mode,
            "exact_envelope_evals": decider.n_exact,
        }
        return RunReport(
            method="PRS", accepted=acc, budget_used=self.meter_.used, phase1_N=self.phase1_N_,
            draws=draws, acceptance_rate=acc / draws if draws else 0.0,
            rejection_constant=self.rejection_constant_, envelope_violations=vio,
            oob_draws=oob, wall_millis=self._elapsed_ms(), samples=samples, details=details,
        )


class ExtendedPliableRejectionSampler(_BaseSampler):
    """Pliable rejection sampling for normalized densities on R^d.

    Phase one runs plain rejection sampling from the Gaussian ``g`` with
    constant ``envelope_M`` (``f <= M g`` is the caller's promise); a kernel
    density estimate of the accepted points, a uniform slab on a ball and the
    tail of ``M g`` then form the proposal for the remaining budget.

    Parameters
    ----------
    n_budget : int
    delta : float
    smoothness : float or None
    he : float
        Multiplier of the slab mass.
    proposal_mean : float or array-like
    proposal_sd : float
        Isotropic initial proposal ``N(proposal_mean, proposal_sd^2 I)``.
    envelope_M : float
    random_state : int or None
    """

    def __init__(self, n_budget=100_000, delta=0.01, smoothness=None, he=1.0, proposal_mean=0.0,
                 proposal_sd=1.0, envelope_M=2.0, random_state=None):
        self.n_budget = n_budget
        self.delta = delta
        self.smoothness = smoothness
        self.he = he
        self.proposal_mean = proposal_mean
        self.proposal_sd = proposal_sd
        self.envelope_M = envelope_M
        self.random_state = random_state

    def fit(self, target):
        _check_target(target, bounded=False)
        n, d, M = self.n_budget, target.dimension, self.envelope_M
        s = target.smoothness if self.smoothness is None else check_smoothness(self.smoothness)
        g = IsotropicGaussian(np.broadcast_to(np.asarray(self.proposal_mean, float), (d,)),
                              self.proposal_sd)
        T, N_bar = eprs_schedule(n, s, d, M, self.delta)
        if T >= n:
            raise InvalidParameterError(f"phase one uses {T} of the {n} evaluations")
        self._start(target)
        rng_first, self._rng_draw, self._rng_u = _streams(self.random_state)

        Y = g.sample(T, rng_first)
        u = rng_first.random(T)
        f = self.meter_.evaluate(target, Y)
        acc, vio = accept_test(M * g.pdf(Y), f, u)
        points = Y[acc]
        if points.shape[0] == 0:
            raise EstimationFailedError("no draw accepted in phase one")

        h = bandwidth(N_bar, 1.0, self.delta, s, d)
        tail_radius = float(np.log(N_bar))
        ball_radius = float(np.log(n))
        self.estimate_ = build_density_estimate(points, h, tail_radius)
        arg = N_bar / self.delta
        r = ball_volume(d, ball_radius) * self.he * (np.log(arg) / N_bar) ** (s / (2.0 * s + d))
        self.proposal_ = ExtendedPliableProposal(self.estimate_, r, ball_radius, g, M, tail_radius)
        self.phase1_N_, self.N_bar_, self.bandwidth_, self.r_ = T, N_bar, h, r
        self.phase1_accepted_ = int(points.shape[0])
        self.phase1_violations_ = int(np.count_nonzero(vio))
        self.smoothness_ = s
        return self

    def sample(self):
        check_is_fitted(self, "proposal_")
        prop = self.proposal_
        decider = prop.make_decider(self.meter_.remaining)
        samples, acc, draws, vio, oob = _rejection_phase(
            self.target_, self.meter_, propose=prop.sample, decide=decider.decide,
            rng_draw=self._rng_draw, rng_u=self._rng_u, free_oob=False,
            in_domain=lambda U: np.ones(U.shape[0], dtype=bool),
        )
        details = {
            "N_bar": self.N_bar_, "bandwidth": self.bandwidth_, "r": self.r_, "he": self.he,
            "s": self.smoothness_, "phase1_accepted": self.phase1_accepted_,
            "phase1_acceptance_rate": self.phase1_accepted_ / self.phase1_N_,
            "phase1_violations": self.phase1_violations_, "tail_mass": prop.tail_mass,
            "normalizer": prop.normalizer,
        }
        return RunReport(
            method="EPRS", accepted=acc, budget_used=self.meter_.used, phase1_N=self.phase1_N_,
            draws=draws, acceptance_rate=acc / draws if draws else 0.0,
            rejection_constant=prop.nominal_normalizer,
            envelope_violations=vio + self.phase1_violations_, oob_draws=oob,
            wall_millis=self._elapsed_ms(), samples=samples, details=details,
        )


def srs_run(target, envelope_const, cfg):
    return SimpleRejectionSampler(cfg.n, envelope_const, cfg.seed).run(target)


def prs_run(target, cfg, **kwargs):
    est = PliableRejectionSampler(cfg.n, cfg.delta, cfg.s, cfg.hc, cfg.normalized, cfg.free_oob,
                                  mass_check=cfg.mass_check, random_state=cfg.seed, **kwargs)
    return est.run(target)


def eprs_run(target, cfg):
    M = cfg.eprs_m
    if M is None:
        raise InvalidParameterError("extended sampling needs the envelope constant eprs_m")
    est = ExtendedPliableRejectionSampler(cfg.n, cfg.delta, cfg.s, cfg.eprs_he, cfg.eprs_mean,
                                          cfg.eprs_sd, M, cfg.seed)
    return est.run(target)
