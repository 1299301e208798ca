"""Command-line entry point.

Subcommands: estimate, train, sample, peaks, experiment, baseline.  Exit
codes: 0 on success, 1 on usage errors, 2 on numerical failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .exceptions import NumericalError, UsageError
from .experiments import (
    EXPERIMENTS,
    METHODS,
    RunConfig,
    run_estimate,
    run_experiment,
    run_train,
)

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); we want exit code 1
        raise UsageError(message)


def _parse_kernel(value: str) -> dict:
    text = value
    if not value.lstrip().startswith("{"):
        if not os.path.exists(value):
            raise UsageError(f"kernel spec file not found: {value}")
        with open(value) as fh:
            text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"invalid kernel spec JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise UsageError("kernel spec must be a JSON object")
    return doc


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--input", help="two-column t,y CSV")
    parser.add_argument("--config", help="JSON run configuration; flags override it")
    parser.add_argument("--kernel", help="kernel spec: inline JSON or a path to a JSON file")
    parser.add_argument("--alpha", type=float, help="window decay (default: half-span window)")
    parser.add_argument("--centre", type=float, help="window centre (default: data midpoint)")
    parser.add_argument("--freq-min", type=float, dest="freq_min")
    parser.add_argument("--freq-max", type=float, dest="freq_max")
    parser.add_argument("--grid-size", type=int, dest="grid_size")
    parser.add_argument("--method", choices=METHODS)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", help="output directory (default: out)")
    parser.add_argument("--demean", action="store_true", default=None)
    parser.add_argument("--train", dest="training", action="store_const", const="train",
                        help="fit hyperparameters before estimating")
    parser.add_argument("--svg", action="store_true", default=None, help="also write SVG plots")
    parser.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> _Parser:
    parser = _Parser(prog="specgp", description="Spectral estimation with Gaussian-process posteriors")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, text in (
        ("estimate", "estimate spectra with the selected method(s)"),
        ("train", "fit kernel hyperparameters and save the model"),
        ("sample", "draw posterior PSD samples on the grid"),
        ("peaks", "locate posterior PSD peaks"),
        ("baseline", "run a classical estimator only"),
    ):
        p = sub.add_parser(name, help=text)
        _add_common(p)
        if name == "sample":
            p.add_argument("--n-samples", type=int, dest="n_samples", default=100)

    p = sub.add_parser("experiment", help="run a named benchmark experiment")
    p.add_argument("name", choices=EXPERIMENTS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out")
    p.add_argument("--svg", action="store_true")
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _config_from_args(args) -> RunConfig:
    overrides = {
        "input": args.input,
        "kernel": _parse_kernel(args.kernel) if args.kernel else None,
        "alpha": args.alpha,
        "centre": args.centre,
        "freq_min": args.freq_min,
        "freq_max": args.freq_max,
        "grid_size": args.grid_size,
        "method": args.method,
        "seed": args.seed,
        "out": args.out,
        "demean": args.demean,
        "training": getattr(args, "training", None),
        "svg": args.svg,
        "n_samples": getattr(args, "n_samples", None),
    }
    if args.config:
        return RunConfig.from_json_file(args.config, overrides)
    return RunConfig().with_overrides(overrides)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "experiment":
            report = run_experiment(args.name, seed=args.seed, outdir=args.out, svg=args.svg)
            for flag, ok in report.flags.items():
                print(f"{args.name}: {flag}: {'PASS' if ok else 'FAIL'}")
            print(f"report written to {report.files['report']}")
            return 0

        cfg = _config_from_args(args)
        if args.command == "train":
            cfg = cfg.with_overrides({"training": "train"})
            report = run_train(cfg)
            print(f"model written to {report.files['model']}")
            return 0
        if args.command == "baseline":
            method = cfg.method if cfg.method != "bnse" else "ls"
            cfg = cfg.with_overrides({"method": method})
            if cfg.method not in ("ls", "periodogram", "music"):
                raise UsageError("baseline method must be ls, periodogram or music")
        if args.command == "sample":
            cfg = cfg.with_overrides({"method": "bnse", "n_samples": max(1, cfg.n_samples)})
        report = run_estimate(cfg)
        if args.command == "peaks":
            print("rank,freq,psd_mean")
            for rank, (freq, val) in enumerate(report.peaks, start=1):
                print(f"{rank},{freq:.8g},{val:.8g}")
        print(f"report written to {report.files['report']}")
        return 0
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
