"""One test per acceptance criterion; each prints a PASS/FAIL line in the summary."""

import math
import time
import warnings

import numpy as np
import pytest
from scipy.stats import norm

from pliable.diagnostics import GridSpec, chi2_grid_test, envelope_scan, ks_test
from pliable.experiments import ExperimentConfig, bench_sweep, rate_check, run_experiment, tune_hc
from pliable.sampler import ExtendedPliableRejectionSampler, PliableRejectionSampler
from pliable.targets import gaussian_target, numeric_cdf, peakiness_target, sin2d_target

TRIALS = 10


def experiment(**kw):
    base = dict(trials=TRIALS, seed=0, output_dir="unused")
    return ExperimentConfig(**{**base, **kw})


def quiet_run(cfg):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return run_experiment(cfg, write=False, return_reports=True)


def rates(rows):
    return np.array([r["acceptance_rate"] for r in rows if not r["error"]], dtype=float)


@pytest.fixture(scope="module")
def sin2d_prs():
    # the tuned sinusoid runs serve both the acceptance-level and the exactness criteria
    cfg = experiment(method="prs", target="sin2d", n=10**6, s=0.4, hc="auto", tune_seeds=10,
                     mass_check="warn")
    start = time.perf_counter()
    rows, reports = quiet_run(cfg)
    return rows, reports, time.perf_counter() - start


def test_criterion_1_srs_sinusoid_quarter(verdict):
    start = time.perf_counter()
    rows, _ = quiet_run(experiment(method="srs", target="sin2d", n=10**5, srs_c=4.0))
    elapsed = time.perf_counter() - start
    mean = rates(rows).mean()
    ok = len(rates(rows)) == TRIALS and abs(mean - 0.25) <= 0.005 and elapsed < 10
    assert verdict("1 SRS sin2d", ok, f"mean acceptance {mean:.4f} (0.250 +- 0.005), "
                                      f"{elapsed:.1f}s"), (mean, elapsed)


def test_criterion_2_prs_sinusoid_tuned(sin2d_prs, verdict):
    rows, reports, elapsed = sin2d_prs
    r = rates(rows)
    mean = r.mean() if r.size else float("nan")
    hc = reports[0].details["hc"] if reports[0] else None
    ok = r.size == TRIALS and 0.60 <= mean <= 0.75 and elapsed < 300
    assert verdict("2 PRS sin2d tuned", ok, f"hc={hc:.4g}, mean acceptance {mean:.4f} in "
                                            f"[0.60, 0.75], {elapsed:.0f}s"), (mean, elapsed)


def test_criterion_3_peakiness_sweep(verdict):
    start = time.perf_counter()
    values = [2, 5, 10, 15, 20]
    medians = {}
    for method in ("srs", "prs"):
        for n in (10**4, 10**5):
            base = experiment(method=method, target="peakiness", target_params={"a": 2}, n=n,
                              hc=0.001)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                rows = bench_sweep(base, "target.a", values, write=False)
            for a in values:
                sel = [r for r in rows if f'"a":{a}}}' in r["target_params"]]
                assert len(sel) == TRIALS and not any(r["error"] for r in sel)
                medians[method, n, a] = float(np.median(rates(sel)))
    elapsed = time.perf_counter() - start
    dominates = all(medians["prs", 10**5, a] > medians["srs", 10**5, a] for a in values)
    improves = all(medians["prs", 10**5, a] >= medians["prs", 10**4, a] for a in values)
    table = ", ".join(f"a={a}: {medians['prs', 10**4, a]:.3f}->{medians['prs', 10**5, a]:.3f}"
                      f" vs {medians['srs', 10**5, a]:.3f}" for a in values)
    ok = dominates and improves and elapsed < 300
    assert verdict("3 peakiness sweep", ok, f"PRS 1e4->1e5 vs SRS 1e5: {table}; "
                                            f"{elapsed:.0f}s"), medians


def test_criterion_4_clutter_tuned(verdict):
    start = time.perf_counter()
    prs_rows, _ = quiet_run(experiment(method="prs", target="clutter", n=10**5, hc="auto",
                                       tune_seeds=10, mass_check="warn"))
    srs_rows, _ = quiet_run(experiment(method="srs", target="clutter", n=10**5))
    elapsed = time.perf_counter() - start
    prs, srs = rates(prs_rows), rates(srs_rows)
    prs_mean = prs.mean() if prs.size else float("nan")
    ok = prs.size == TRIALS and prs_mean >= 0.70 and srs.mean() < 0.25 and elapsed < 120
    assert verdict("4 clutter tuned", ok, f"PRS mean {prs_mean:.4f} (>= 0.70), SRS mean "
                                          f"{srs.mean():.4f} (< 0.25), {elapsed:.0f}s"), \
        (prs_mean, srs.mean())


def test_criterion_5_exactness(sin2d_prs, verdict):
    target = peakiness_target(2)
    hc = tune_hc(target, 10**5, seed=12345, n_seeds=10)
    cdf = numeric_cdf(target)
    peak_ok = 0
    for seed in range(TRIALS):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rep = PliableRejectionSampler(10**5, hc=hc, mass_check="warn",
                                          random_state=seed).run(target)
        peak_ok += rep.envelope_violations == 0 and ks_test(rep.samples[:, 0], cdf).p_value > 0.01

    sin = sin2d_target()
    grid = GridSpec.for_target(sin, 11)
    _, reports, _ = sin2d_prs
    sin_ok = sum(rep is not None and rep.envelope_violations == 0
                 and chi2_grid_test(rep.samples, sin, grid).p_value > 0.01 for rep in reports)
    ok = peak_ok >= 9 and sin_ok >= 9
    assert verdict("5 exactness", ok, f"peakiness KS {peak_ok}/10 (hc={hc:.4g}), sin2d "
                                      f"chi-square {sin_ok}/10, violation-free runs only"), \
        (peak_ok, sin_ok)


def test_criterion_6_estimation_rate(verdict):
    medians, slope = rate_check(n_seeds=10)
    decreasing = all(b < a for a, b in zip(medians, medians[1:]))
    ok = slope <= -0.25 and decreasing
    assert verdict("6 rate", ok, f"slope {slope:.3f} (<= -0.25), medians "
                                 f"{[round(m, 5) for m in medians]}"), (slope, medians)


def test_criterion_7_confidence_event(verdict):
    target = gaussian_target(0.0, 1.0, half_width=6.0)
    n = 10**5
    hc = tune_hc(target, n, seed=12345, n_seeds=100)
    grid = GridSpec.for_target(target, 1024)
    covered = 0
    for seed in range(100):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            est = PliableRejectionSampler(n, hc=hc, mass_check="warn", random_state=seed)
            est.fit(target)
        covered += envelope_scan(target, est.proposal_, grid)[0] <= 0
    assert verdict("7 confidence event", covered >= 95,
                   f"{covered}/100 builds dominate the target (hc={hc:.4g})"), covered


def test_criterion_8_extended_sampler(verdict):
    start = time.perf_counter()
    target = gaussian_target(0.0, 1.0)
    # f / g = 2 exp(-3 x^2 / 8) for g = N(0, 4) peaks at x = 0
    M = 2.0
    improved = ks_ok = 0
    for seed in range(TRIALS):
        rep = ExtendedPliableRejectionSampler(10**5, he=0.25, proposal_sd=2.0, envelope_M=M,
                                              random_state=seed).run(target)
        improved += rep.acceptance_rate > rep.details["phase1_acceptance_rate"]
        ks_ok += ks_test(rep.samples[:, 0], norm.cdf).p_value > 0.01
    elapsed = time.perf_counter() - start
    ok = improved >= 9 and ks_ok >= 9 and elapsed < 120
    assert verdict("8 EPRS", ok, f"phase 3 beats phase 1 in {improved}/10, KS {ks_ok}/10, "
                                 f"{elapsed:.0f}s"), (improved, ks_ok)


def test_criterion_9_budget_determinism_mutation(verdict):
    configs = [
        experiment(method="srs", target="sin2d", n=20_000, trials=3),
        experiment(method="prs", target="peakiness", target_params={"a": 5}, n=20_000,
                   hc=0.001, trials=3),
        experiment(method="prs", target="peakiness", target_params={"a": 5}, n=20_000,
                   hc=0.001, free_oob=True, trials=3),
        experiment(method="prs", target="sin2d", n=20_000, hc=1.0, mass_check="warn", trials=3),
        experiment(method="eprs", target="gaussian", target_params={"mean": [0.0]}, n=20_000,
                   eprs_m=2.0, eprs_sd=2.0, eprs_he=0.25, trials=3),
    ]
    within = repeat = True
    keys = ("accepted", "budget_used", "N_phase1", "envelope_violations", "oob_draws")
    for cfg in configs:
        first, _ = quiet_run(cfg)
        again, _ = quiet_run(cfg)
        within &= all(not r["error"] and r["budget_used"] <= cfg.n for r in first)
        repeat &= all(tuple(a[k] for k in keys) == tuple(b[k] for k in keys)
                      for a, b in zip(first, again))

    def flat(N, A, delta, s, d):
        return (math.log(N * A / delta) / N) ** 0.02

    def inverted(N, A, delta, s, d):
        return (math.log(N * A / delta) / N) ** (-1.0 / (2.0 * s + d))

    caught = []
    for fn in (flat, inverted):
        medians, slope = rate_check(fn, n_seeds=3)
        caught.append(not (slope <= -0.25 and all(b < a for a, b in zip(medians,
                                                                         medians[1:]))))
    ok = within and repeat and all(caught)
    assert verdict("9 budget/determinism/mutation", ok,
                   f"budget within n: {within}, reproducible: {repeat}, "
                   f"mutations caught: {sum(caught)}/2"), (within, repeat, caught)
