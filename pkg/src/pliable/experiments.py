"""Experiment configuration, orchestration, slab tuning and the validation suite.

Config documents are flat ``key = value`` (or ``key: value``) lines with
dotted sections; ``#`` starts a comment. Recognized keys::

    method            srs | prs | eprs
    target            target name (alias of target.name)
    target.<param>    keyword argument of the target factory
    n                 alias of sampler.n
    sampler.n, sampler.delta, sampler.s, sampler.hc, sampler.seed,
    sampler.normalized, sampler.free_oob, sampler.mass_check,
    sampler.envelope_eval
    srs.c             SRS envelope mass (default: tight bound)
    eprs.m, eprs.he, eprs.mean, eprs.sd
    tune.candidates, tune.seeds      used when sampler.hc = auto
    trials, output_dir, emit_samples

Values are read as JSON when possible (numbers, booleans, lists), otherwise
as bare strings.
"""

import csv
import inspect
import json
import struct
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import integrate
from scipy.stats import norm

from . import kernel
from .diagnostics import (
    GridSpec,
    chi2_grid_test,
    envelope_scan,
    integrate_grid,
    ks_test,
    rate_fit,
    sup_error,
)
from .exceptions import (
    BudgetExhaustedError,
    ConfigParseError,
    ConfigValidationError,
    InvalidParameterError,
    PliableError,
    TuningFallbackWarning,
)
from .kernel import build_regression_estimate, gaussian_kernel_1d
from .proposal import PliableProposal, radius_r
from .sampler import (
    ExtendedPliableRejectionSampler,
    PliableRejectionSampler,
    SimpleRejectionSampler,
    phase_split_prs,
)
from .targets import TARGETS, gaussian_target, make_target, sin2d_target

CSV_COLUMNS = (
    "method", "target", "target_params", "n", "seed", "N_phase1", "accepted", "budget_used",
    "acceptance_rate", "rejection_constant", "envelope_violations", "oob_draws", "wall_ms",
    "error",
)

SAMPLE_MAGIC = b"PRSSMPL1"

DEFAULT_CANDIDATES = tuple(np.logspace(-3, 1, 81))

_SAMPLER_KEYS = {
    "n": int, "delta": float, "s": float, "hc": None, "seed": int, "normalized": bool,
    "free_oob": bool, "mass_check": str, "envelope_eval": str,
}
_EPRS_KEYS = {"m": float, "he": float, "mean": float, "sd": float}
_TOP_KEYS = {"method": str, "trials": int, "output_dir": str, "emit_samples": bool}
_ALIASES = {"target": "target.name", "n": "sampler.n", "out": "output_dir",
            "seed": "sampler.seed", "delta": "sampler.delta", "hc": "sampler.hc"}


@dataclass
class ExperimentConfig:
    method: str
    target: str
    target_params: dict = field(default_factory=dict)
    n: int = 100_000
    delta: float = 0.01
    s: float = 2.0
    hc: object = 1.0
    seed: int = 0
    normalized: Optional[bool] = None
    free_oob: bool = False
    mass_check: str = "abort"
    envelope_eval: str = "auto"
    srs_c: Optional[float] = None
    eprs_m: float = 2.0
    eprs_he: float = 1.0
    eprs_mean: float = 0.0
    eprs_sd: float = 1.0
    tune_candidates: tuple = DEFAULT_CANDIDATES
    tune_seeds: int = 1
    trials: int = 10
    output_dir: str = "results"
    emit_samples: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self):
        def bad(name, msg):
            raise ConfigValidationError(f"{name}: {msg}")

        if self.method not in ("srs", "prs", "eprs"):
            bad("method", f"must be srs, prs or eprs, got {self.method!r}")
        if self.target not in TARGETS:
            raise ConfigParseError(
                f"target.name: unknown target {self.target!r}; available: "
                f"{', '.join(sorted(TARGETS))}")
        accepted = set(inspect.signature(TARGETS[self.target]).parameters)
        if self.target == "clutter":
            accepted = (accepted - {"data"}) | {"data_seed"}
        unknown = set(self.target_params) - accepted
        if unknown:
            raise ConfigParseError(f"target.{sorted(unknown)[0]}: not a parameter of "
                                   f"{self.target!r} (accepted: {', '.join(sorted(accepted))})")
        if not isinstance(self.n, (int, np.integer)) or self.n < 0:
            bad("sampler.n", f"must be a non-negative integer, got {self.n!r}")
        if not 0.0 < self.delta < 1.0:
            bad("sampler.delta", f"must lie in (0, 1), got {self.delta!r}")
        if not 0.0 < self.s <= 2.0:
            bad("sampler.s", f"must lie in (0, 2], got {self.s!r}")
        if self.hc != "auto" and (not isinstance(self.hc, (int, float)) or self.hc < 0):
            bad("sampler.hc", f"must be a non-negative number or 'auto', got {self.hc!r}")
        if self.mass_check not in ("abort", "warn"):
            bad("sampler.mass_check", f"must be abort or warn, got {self.mass_check!r}")
        if self.envelope_eval not in ("auto", "exact", "grid"):
            bad("sampler.envelope_eval", f"must be auto, exact or grid, got {self.envelope_eval!r}")
        if self.srs_c is not None and not self.srs_c > 0:
            bad("srs.c", f"must be positive, got {self.srs_c!r}")
        if not self.eprs_m >= 1.0:
            bad("eprs.m", f"must be >= 1, got {self.eprs_m!r}")
        if not self.eprs_he >= 0.0:
            bad("eprs.he", f"must be non-negative, got {self.eprs_he!r}")
        if not self.eprs_sd > 0.0:
            bad("eprs.sd", f"must be positive, got {self.eprs_sd!r}")
        if not self.tune_candidates:
            bad("tune.candidates", "must not be empty")
        if not isinstance(self.tune_seeds, int) or self.tune_seeds < 1:
            bad("tune.seeds", f"must be a positive integer, got {self.tune_seeds!r}")
        if not isinstance(self.trials, int) or self.trials < 1:
            bad("trials", f"must be a positive integer, got {self.trials!r}")
        return self

    def to_dict(self):
        out = asdict(self)
        out["tune_candidates"] = list(self.tune_candidates)
        return out


def parse_value(raw):
    raw = raw.strip()
    try:
        return json.loads(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    if raw.lower() in ("true", "yes", "on"):
        return True
    if raw.lower() in ("false", "no", "off"):
        return False
    if "," in raw:
        return [parse_value(part) for part in raw.split(",")]
    return raw.strip("\"'")


def _coerce(key, value, kind):
    if kind is None:
        return value
    try:
        if kind is int:
            if isinstance(value, bool) or float(value) != int(float(value)):
                raise ValueError
            return int(float(value))
        if kind is float:
            if isinstance(value, bool):
                raise ValueError
            return float(value)
        if kind is bool:
            if not isinstance(value, bool):
                raise ValueError
            return value
        return str(value)
    except (TypeError, ValueError):
        raise ConfigParseError(f"{key}: expected {kind.__name__}, got {value!r}") from None


def parse_config(text, **overrides):
    """Parse a config document into a validated :class:`ExperimentConfig`.

    ``overrides`` (e.g. ``seed``, ``trials``, ``output_dir``, ``free_oob``)
    replace the corresponding fields after parsing.
    """
    entries = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        sep = min((i for i in (line.find("="), line.find(":")) if i >= 0), default=-1)
        if sep <= 0:
            raise ConfigParseError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = line[:sep].strip(), line[sep + 1:]
        key = _ALIASES.get(key, key)
        if key in entries:
            raise ConfigParseError(f"{key}: given twice")
        entries[key] = parse_value(raw)

    fields = {}
    target_params = {}
    for key, value in entries.items():
        section, _, name = key.partition(".")
        if key in _TOP_KEYS:
            fields[key] = _coerce(key, value, _TOP_KEYS[key])
        elif key == "target.name":
            fields["target"] = str(value)
        elif section == "target" and name:
            target_params[name] = value
        elif section == "sampler" and name in _SAMPLER_KEYS:
            fields[name] = _coerce(key, value, _SAMPLER_KEYS[name])
        elif section == "eprs" and name in _EPRS_KEYS:
            fields[f"eprs_{name}"] = _coerce(key, value, _EPRS_KEYS[name])
        elif key == "srs.c":
            fields["srs_c"] = _coerce(key, value, float)
        elif key == "tune.candidates":
            values = value if isinstance(value, list) else [value]
            fields["tune_candidates"] = tuple(_coerce(key, v, float) for v in values)
        elif key == "tune.seeds":
            fields["tune_seeds"] = _coerce(key, value, int)
        else:
            raise ConfigParseError(f"{key}: unknown key")
    for name in ("method", "target"):
        if name not in fields:
            raise ConfigParseError(f"{name}: required")
    if isinstance(fields.get("hc"), str) and fields["hc"] != "auto":
        raise ConfigParseError(f"sampler.hc: expected a number or 'auto', got {fields['hc']!r}")
    fields["target_params"] = target_params
    fields.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig(**fields)
    except TypeError as exc:
        raise ConfigParseError(str(exc)) from None


def load_config(path, **overrides):
    return parse_config(Path(path).read_text(encoding="utf-8"), **overrides)


def _canonical(params):
    return json.dumps(params, sort_keys=True, separators=(",", ":"), default=str)


# ---------------------------------------------------------------- tuning

def tune_hc(target, n, candidates=DEFAULT_CANDIDATES, seed=0, delta=0.01, s=None,
            n_seeds=1, points_per_axis=256):
    """Smallest slab multiplier whose envelope dominates the target on a grid.

    For each tuning seed the estimate of a PRS run with budget ``n`` is built
    once (the estimate does not depend on the multiplier) and the largest
    gap between the target and the estimate over a ``points_per_axis`` grid
    is measured against exact target values. A candidate passes when its
    slab height covers the largest gap over all tuning seeds. Without a
    passing candidate the largest one is returned with a warning.
    """
    candidates = sorted(float(c) for c in candidates)
    if not candidates:
        raise InvalidParameterError("no candidates given")
    if any(c < 0 for c in candidates):
        raise InvalidParameterError("candidates must be non-negative")
    if not target.is_bounded:
        raise InvalidParameterError("slab tuning needs a box target")
    d, A = target.dimension, target.length
    s = target.smoothness if s is None else s
    N = phase_split_prs(n, s, d)
    h = kernel.bandwidth(N, A, delta, s, d)
    grid = GridSpec.for_target(target, points_per_axis)
    seq = np.random.SeedSequence(seed)
    worst = -np.inf
    for child in seq.spawn(n_seeds):
        design_rng = np.random.default_rng(child.spawn(1)[0])
        U = A * design_rng.random((N, d))
        values = target.density(target.to_physical(U))
        est = build_regression_estimate(U, values, h, A)
        m_hat = 1.0 if target.normalized else float(A ** d * values.mean())
        if m_hat <= 0 or est.mass <= 0:
            worst = np.inf
            break
        prop = PliableProposal(est, 0.0, m_hat, A)
        gap, _ = envelope_scan(target, prop, grid)
        worst = max(worst, gap)
    slab_per_hc = radius_r(N, A, d, s, delta, 1.0) / A ** d
    for c in candidates:
        if c * slab_per_hc >= worst:
            return c
    warnings.warn(f"no candidate covers the largest gap {worst:.4g}; using {candidates[-1]}",
                  TuningFallbackWarning, stacklevel=2)
    return candidates[-1]


# ---------------------------------------------------------------- runs

def _target_for(cfg):
    return make_target(cfg.target, **cfg.target_params)


def _resolved_hc(cfg, target):
    if cfg.hc != "auto":
        return float(cfg.hc)
    return tune_hc(target, cfg.n, cfg.tune_candidates, seed=cfg.seed, delta=cfg.delta, s=cfg.s,
                   n_seeds=cfg.tune_seeds)


def _sampler_for(cfg, seed, hc):
    if cfg.method == "srs":
        return SimpleRejectionSampler(cfg.n, cfg.srs_c, random_state=seed)
    if cfg.method == "prs":
        return PliableRejectionSampler(cfg.n, cfg.delta, cfg.s, hc, cfg.normalized,
                                       cfg.free_oob, cfg.envelope_eval, cfg.mass_check,
                                       random_state=seed)
    return ExtendedPliableRejectionSampler(cfg.n, cfg.delta, cfg.s, cfg.eprs_he, cfg.eprs_mean,
                                           cfg.eprs_sd, cfg.eprs_m, random_state=seed)


def write_samples(path, samples):
    """Raw dump: 8-byte magic, little-endian uint64 dimension, float64 values row-major."""
    samples = np.asarray(samples, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(SAMPLE_MAGIC)
        fh.write(struct.pack("<Q", samples.shape[1]))
        fh.write(np.ascontiguousarray(samples).tobytes())


def read_samples(path):
    with open(path, "rb") as fh:
        if fh.read(8) != SAMPLE_MAGIC:
            raise InvalidParameterError(f"{path}: not a sample dump")
        (d,) = struct.unpack("<Q", fh.read(8))
        data = np.frombuffer(fh.read(), dtype="<f8")
    return data.reshape(-1, d)


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return "" if value is None else str(value)


def _append_rows(path, rows):
    new = not path.exists()
    with open(path, "a", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        if new:
            writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row[k]) for k in CSV_COLUMNS})


def read_results(path):
    """Read a results CSV back into typed rows."""
    ints = {"n", "seed", "N_phase1", "accepted", "budget_used", "envelope_violations",
            "oob_draws", "wall_ms"}
    floats = {"acceptance_rate", "rejection_constant"}
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            for k in ints:
                row[k] = int(row[k]) if row[k] else None
            for k in floats:
                row[k] = float(row[k]) if row[k] else None
            rows.append(row)
    return rows


def run_experiment(cfg, write=True, return_reports=False):
    """Run ``cfg.trials`` trials with seeds ``cfg.seed, cfg.seed + 1, ...``.

    Returns one row per trial; errors are recorded in the ``error`` column.
    With ``write`` set, rows are appended to ``results.csv`` in the output
    directory and a JSON report per run goes to ``runs/``. With
    ``return_reports`` the run reports (``None`` for failed trials) are
    returned alongside the rows.
    """
    out = Path(cfg.output_dir)
    if write:
        (out / "runs").mkdir(parents=True, exist_ok=True)
    rows, reports = [], []
    try:
        target = _target_for(cfg)
        hc = _resolved_hc(cfg, target) if cfg.method == "prs" else None
        setup_error = None
    except PliableError as exc:
        target, hc, setup_error = None, None, exc
    params = _canonical(cfg.target_params)
    for trial in range(cfg.trials):
        seed = cfg.seed + trial
        row = dict.fromkeys(CSV_COLUMNS)
        row.update(method=cfg.method, target=cfg.target, target_params=params, n=cfg.n,
                   seed=seed, error="")
        report = None
        try:
            if setup_error is not None:
                raise setup_error
            report = _sampler_for(cfg, seed, hc).run(target)
            if report.draws == 0:
                raise BudgetExhaustedError("budget leaves no proposal draws")
        except PliableError as exc:
            row["error"] = f"{exc.kind}: {exc}"
            row["budget_used"] = getattr(exc, "budget_used", None)
        else:
            row.update(N_phase1=report.phase1_N, accepted=report.accepted,
                       budget_used=report.budget_used, acceptance_rate=report.acceptance_rate,
                       rejection_constant=report.rejection_constant,
                       envelope_violations=report.envelope_violations,
                       oob_draws=report.oob_draws, wall_ms=report.wall_millis)
        rows.append(row)
        reports.append(report)
        if write:
            stem = f"{cfg.method}_{cfg.target}_{seed}"
            doc = {"config": {**cfg.to_dict(), "seed": seed, "hc_resolved": hc}, "row": row,
                   "report": report.to_dict() if report else None}
            (out / "runs" / f"{stem}.json").write_text(
                json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n",
                encoding="utf-8")
            if cfg.emit_samples and report is not None:
                write_samples(out / "runs" / f"{stem}.bin", report.samples)
    if write:
        _append_rows(out / "results.csv", rows)
    return (rows, reports) if return_reports else rows


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return str(obj)


_FIELD_OF = {"target.name": "target", "n": "n"}


def bench_sweep(base, axis, values, write=True):
    """Run ``base`` once per value of the config key ``axis``; rows of all runs."""
    values = list(values)
    if not values:
        warnings.warn("empty sweep: nothing to run", UserWarning, stacklevel=2)
        return []
    key = _ALIASES.get(axis, axis)
    rows = []
    for value in values:
        if key.startswith("target.") and key != "target.name":
            cfg = replace(base, target_params={**base.target_params, key[7:]: value})
        else:
            section, _, name = key.partition(".")
            if section == "sampler":
                field_name = name
            elif section == "eprs":
                field_name = f"eprs_{name}"
            elif key in ("method", "trials"):
                field_name = key
            elif key == "target.name":
                field_name = "target"
            else:
                raise ConfigParseError(f"{axis}: not a sweepable key")
            cfg = replace(base, **{field_name: value})
        rows.extend(run_experiment(cfg, write=write))
    return rows


def summarize(rows):
    """Mean, standard deviation and median acceptance over error-free rows."""
    rates = np.array([r["acceptance_rate"] for r in rows if not r["error"]], dtype=float)
    if rates.size == 0:
        return {"trials": len(rows), "ok": 0}
    return {"trials": len(rows), "ok": int(rates.size), "mean": float(rates.mean()),
            "std": float(rates.std(ddof=1)) if rates.size > 1 else 0.0,
            "median": float(np.median(rates))}


# ---------------------------------------------------------------- checks

RATE_SIZES = (1_000, 3_000, 10_000, 30_000, 100_000)


def rate_check(bandwidth_fn=None, sizes=RATE_SIZES, n_seeds=10, s=2.0, delta=0.01,
               points=1001, seed=0):
    """Sup-grid error of the regression estimate against N on a boxed normal.

    Returns ``(median_errors, slope)``. ``bandwidth_fn`` replaces the
    bandwidth schedule, which lets tests inject a corrupted one.
    """
    bandwidth_fn = bandwidth_fn or kernel.bandwidth
    target = gaussian_target(0.0, 1.0, half_width=6.0)
    A = target.length
    grid = GridSpec.for_target(target, points)
    seqs = np.random.SeedSequence(seed).spawn(n_seeds)
    medians = []
    for N in sizes:
        h = bandwidth_fn(N, A, delta, s, 1)
        errs = []
        for child in seqs:
            rng = np.random.default_rng([*child.generate_state(2), N])
            U = A * rng.random((N, 1))
            est = build_regression_estimate(U, target.density(target.to_physical(U)), h, A)
            errs.append(sup_error(est, target, grid))
        medians.append(float(np.median(errs)))
    return medians, rate_fit(sizes, medians)


def _check(name, fn):
    try:
        ok, detail = fn()
    except Exception as exc:  # a crashing check is a failing check
        ok, detail = False, f"{type(exc).__name__}: {exc}"
    return {"check": name, "passed": bool(ok), "detail": detail}


def _kernel_moments():
    q = [integrate.quad(lambda u, k=k: u ** k * gaussian_kernel_1d(u), -10, 10)[0]
         for k in range(3)]
    ok = abs(q[0] - 1) < 1e-6 and abs(q[1]) < 1e-8 and abs(q[2] - 1) < 1e-6
    return ok, f"moments {q}"


def _proposal_normalization():
    target = sin2d_target()
    est = PliableRejectionSampler(20_000, hc=0.05, smoothness=1.0, random_state=0).fit(target)
    prop = est.proposal_
    grid = GridSpec((0.0, 0.0), 1.0, 401)
    inside = integrate_grid(prop.density, grid)
    e = prop.estimate
    h = e.bandwidth
    p_in = np.prod(norm.cdf((1 - e.centers) / h) - norm.cdf(-e.centers / h), axis=1)
    outside = prop.kernel_factor * e.mass * (1 - np.dot(e.component_probabilities(), p_in))
    total = inside + outside / prop.normalizer
    return abs(total - 1) < 1e-4, f"total proposal mass {total:.8f}"


def _srs_exactness():
    target = sin2d_target()
    grid = GridSpec((0.0, 0.0), 1.0, 11)
    passed = 0
    for seed in range(10):
        rep = SimpleRejectionSampler(400_000, 4.0, random_state=seed).run(target)
        passed += chi2_grid_test(rep.samples, target, grid).p_value > 0.01
    return passed >= 9, f"{passed}/10 chi-square passes"


def _budget_exactness():
    details = []
    ok = True
    target = make_target("peakiness", a=2)
    for free in (False, True):
        rep = PliableRejectionSampler(20_000, hc=0.001, free_oob=free, random_state=3).run(target)
        expected = 20_000 if not free else rep.phase1_N + rep.draws
        ok &= rep.budget_used == expected and rep.budget_used <= 20_000
        again = PliableRejectionSampler(20_000, hc=0.001, free_oob=free, random_state=3).run(target)
        ok &= (again.accepted, again.envelope_violations) == (rep.accepted, rep.envelope_violations)
        details.append(f"free_oob={free}: used {rep.budget_used}")
    return ok, "; ".join(details)


def _eprs_exactness():
    target = gaussian_target(0.0, 1.0)
    passed = 0
    for seed in range(10):
        rep = ExtendedPliableRejectionSampler(20_000, he=0.25, proposal_sd=2.0, envelope_M=2.0,
                                              random_state=seed).run(target)
        passed += ks_test(rep.samples[:, 0], norm.cdf).p_value > 0.01
    return passed >= 9, f"{passed}/10 KS passes"


def _rate_trend(bandwidth_fn=None):
    medians, slope = rate_check(bandwidth_fn, n_seeds=5)
    ok = slope <= -0.25 and all(b < a for a, b in zip(medians, medians[1:]))
    return ok, f"slope {slope:.3f}, medians {[round(m, 5) for m in medians]}"


def _envelope_dominance():
    target = gaussian_target(0.0, 1.0, half_width=6.0)
    n = 100_000
    # the largest gap over about 1 / delta tuning builds bounds a fresh build's gap
    # with probability about 1 - delta
    hc = tune_hc(target, n, seed=1000, n_seeds=100)
    grid = GridSpec.for_target(target, 256)
    bad = 0
    for seed in range(20):
        prop = PliableRejectionSampler(n, hc=hc, mass_check="warn", random_state=seed)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            prop.fit(target)
        bad += envelope_scan(target, prop.proposal_, grid)[0] > 0
    return bad <= 2, f"hc={hc:.4g}, {bad}/20 builds with a positive deficit"


def validate(bandwidth_fn=None):
    """Run the invariant suite; returns a list of ``{check, passed, detail}`` dicts."""
    return [
        _check("kernel-moments", _kernel_moments),
        _check("proposal-normalization", _proposal_normalization),
        _check("envelope-dominance", _envelope_dominance),
        _check("srs-chi-square", _srs_exactness),
        _check("eprs-ks", _eprs_exactness),
        _check("budget-exactness", _budget_exactness),
        _check("rate-trend", lambda: _rate_trend(bandwidth_fn)),
    ]
