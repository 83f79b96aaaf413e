"""Command-line entry point: ``pliable {run,bench,tune-hc,validate}``."""

import argparse
import json
import sys
import warnings
from dataclasses import replace

from .exceptions import ConfigParseError, PliableError, TuningFallbackWarning
from .experiments import (
    bench_sweep,
    load_config,
    parse_value,
    run_experiment,
    summarize,
    tune_hc,
    validate,
)
from .targets import make_target


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"error: usage: {message}\n")


def _common_flags(default):
    # subcommands repeat the global flags with suppressed defaults, so a flag
    # given before the command is not reset by the subparser
    common = _Parser(add_help=False)
    common.add_argument("--config", default=default, help="experiment config file")
    common.add_argument("--seed", type=int, default=default, help="root seed of the first trial")
    common.add_argument("--out", default=default, help="output directory")
    common.add_argument("--trials", type=int, default=default, help="number of trials")
    common.add_argument("--free-oob", action="store_true", default=default,
                        help="do not charge proposal draws outside the domain")
    return common


def _build_parser():
    common = _common_flags(argparse.SUPPRESS)
    parser = _Parser(prog="pliable", parents=[_common_flags(None)],
                     description="Pliable rejection sampling experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("run", parents=[common], help="run the configured experiment")
    bench = sub.add_parser("bench", parents=[common], help="sweep one config key")
    bench.add_argument("--axis", required=True, help="config key to sweep, e.g. target.a")
    bench.add_argument("--values", required=True, help="comma-separated values")
    bench.add_argument("--methods", help="comma-separated methods to repeat the sweep for")
    tune = sub.add_parser("tune-hc", parents=[common], help="pick the slab multiplier")
    tune.add_argument("--candidates", help="comma-separated candidates")
    tune.add_argument("--tune-seeds", type=int, default=None)
    sub.add_parser("validate", parents=[common], help="run the invariant suite")
    return parser


def _config(args):
    if not args.config:
        raise ConfigParseError("--config: required for this command")
    return load_config(args.config, seed=args.seed, trials=args.trials, output_dir=args.out,
                       free_oob=args.free_oob)


def _print_summary(rows):
    print(json.dumps(summarize(rows), sort_keys=True))
    for row in rows:
        if row["error"]:
            print(f"seed {row['seed']}: {row['error']}", file=sys.stderr)


def _values(text):
    value = parse_value(text)
    return value if isinstance(value, list) else [value]


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            _print_summary(run_experiment(_config(args)))
        elif args.command == "bench":
            cfg = _config(args)
            methods = _values(args.methods) if args.methods else [cfg.method]
            rows = []
            for method in methods:
                rows.extend(bench_sweep(replace(cfg, method=str(method)), args.axis,
                                        _values(args.values)))
            _print_summary(rows)
        elif args.command == "tune-hc":
            cfg = _config(args)
            candidates = [float(c) for c in _values(args.candidates)] if args.candidates \
                else cfg.tune_candidates
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                hc = tune_hc(make_target(cfg.target, **cfg.target_params), cfg.n, candidates,
                             seed=cfg.seed, delta=cfg.delta, s=cfg.s,
                             n_seeds=args.tune_seeds or cfg.tune_seeds)
            fallback = any(issubclass(w.category, TuningFallbackWarning) for w in caught)
            print(json.dumps({"hc": hc, "fallback": fallback}))
        else:
            results = validate()
            for res in results:
                print(json.dumps(res, sort_keys=True))
            passed = sum(r["passed"] for r in results)
            print(json.dumps({"passed": passed, "total": len(results)}))
            return 0 if passed == len(results) else 1
    except PliableError as exc:
        print(f"error: {exc.kind}: {exc}".replace("\n", " "), file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: io: {exc}".replace("\n", " "), file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
