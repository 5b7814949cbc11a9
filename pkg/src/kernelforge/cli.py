"""``kernelforge`` command line.

Exit codes: 0 success, 1 usage error, 2 data error, 3 solver
non-convergence (only with ``--strict``).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import warnings

import numpy as np

from .bench import (
    FORMATS,
    METHODS,
    ExperimentConfig,
    emit_report,
    generalization_sweep,
    load_experiment_data,
    per_kernel_table,
    run_experiment,
    BenchReport,
)
from .datasets import DataError, scale_unit_interval
from .modelio import ModelBundle, ModelFormatError, load_model, save_model
from .solver import ConvergenceWarning

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CONVERGENCE = 0, 1, 2, 3

# One table declares every flag; the parser and --help are built from it.
FLAGS = {
    "data": dict(help="instances file (CSV with label first, or sparse label idx:val)"),
    "manifest": dict(help="feature-group manifest (JSON)"),
    "benchmark": dict(help="bundled benchmark dataset instead of --data/--manifest"),
    "config": dict(help="experiment config (JSON); other flags override its fields"),
    "method": dict(choices=("svc",) + METHODS, help="method to train (default smkl)"),
    "seed": dict(type=int, help="base random seed (default 0)"),
    "repeats": dict(type=int, help="number of random splits (default 10)"),
    "train_fraction": dict(type=float, help="training share of each split (default 0.6)"),
    "fractions": dict(type=float, nargs="+", help="training fractions for the sweep"),
    "subsample": dict(type=int, help="stratified subsample size before splitting"),
    "threads": dict(type=int, help="worker threads (default: available CPUs)"),
    "grid": dict(choices=("full", "small"), help="hyperparameter grid (default full)"),
    "out_dir": dict(help="directory for report files"),
    "format": dict(choices=FORMATS, action="append",
                   help="report format; repeat for several (default: all)"),
    "psd_policy": dict(choices=("abort", "warn"),
                       help="S-MKL with an indefinite training Gram: abort (default) or warn and solve"),
    "strict": dict(action="store_true", help="treat solver non-convergence as fatal (exit 3)"),
    "model": dict(help="model file (written by train, read by predict/inspect)"),
    "input": dict(help="CSV of raw feature rows to score"),
}

COMMANDS = {
    "train": ("train one model on a whole dataset and save it",
              ["data", "manifest", "benchmark", "method", "seed", "subsample", "threads",
               "grid", "psd_policy", "strict", "model"]),
    "predict": ("print one 'label,score' line per input row", ["model", "input"]),
    "bench": ("repeated split protocol; writes report files",
              ["config", "data", "manifest", "benchmark", "method", "seed", "repeats",
               "train_fraction", "subsample", "threads", "grid", "psd_policy", "out_dir", "format",
               "strict"]),
    "sweep": ("generalization sweep over training fractions",
              ["config", "data", "manifest", "benchmark", "method", "seed", "repeats",
               "fractions", "subsample", "threads", "grid", "psd_policy", "out_dir", "format", "strict"]),
    "kernels": ("per-kernel performance table on a single split",
                ["config", "data", "manifest", "benchmark", "seed", "train_fraction",
                 "subsample", "threads", "grid", "out_dir", "format"]),
    "inspect": ("print a JSON summary of a model file", ["model"]),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kernelforge", description="Success-based multiple kernel learning.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    for name, (text, flags) in COMMANDS.items():
        cmd = sub.add_parser(name, help=text, description=text)
        for flag in flags:
            cmd.add_argument("--" + flag.replace("_", "-"), dest=flag, **FLAGS[flag])
    return parser


def _config(args) -> ExperimentConfig:
    doc = {}
    base = None
    if getattr(args, "config", None):
        with open(args.config) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise UsageError(f"{args.config}: invalid JSON ({exc})") from exc
        base = os.path.dirname(os.path.abspath(args.config))
    overrides = {
        "data": args.data, "manifest": args.manifest, "benchmark": args.benchmark,
        "seed": args.seed, "repeats": getattr(args, "repeats", None),
        "train_fraction": getattr(args, "train_fraction", None),
        "sweep_fractions": getattr(args, "fractions", None),
        "subsample": args.subsample, "grid": args.grid,
        "out_dir": getattr(args, "out_dir", None), "formats": getattr(args, "format", None),
        "threads": args.threads, "psd_policy": getattr(args, "psd_policy", None),
    }
    if getattr(args, "method", None):
        overrides["methods"] = [args.method]
    for key in ("data", "manifest"):
        if overrides[key] is not None:
            overrides[key] = os.path.abspath(overrides[key])
    doc.update({k: v for k, v in overrides.items() if v is not None})
    doc.setdefault("threads", os.cpu_count() or 1)
    try:
        return ExperimentConfig.from_json(doc, base_dir=base)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def _strict_exit(args, report: BenchReport) -> int:
    if args.strict and not report.all_converged:
        print("error: solver did not converge in at least one final fit", file=sys.stderr)
        return EXIT_CONVERGENCE
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _config(args)
    report = run_experiment(cfg)
    for path in emit_report(report, cfg.out_dir, cfg.formats):
        print(path)
    return _strict_exit(args, report)


def cmd_sweep(args) -> int:
    cfg = _config(args)
    if not cfg.sweep_fractions:
        raise UsageError("sweep needs --fractions or sweep_fractions in the config")
    ds = load_experiment_data(cfg)
    report = run_experiment(cfg, ds)
    report.sweep = generalization_sweep(cfg, ds)
    for path in emit_report(report, cfg.out_dir, cfg.formats):
        print(path)
    return _strict_exit(args, report)


def cmd_kernels(args) -> int:
    cfg = _config(args)
    rows = per_kernel_table(cfg)
    report = BenchReport(config=cfg.to_json(), methods={}, repeats=[], per_kernel=rows)
    for path in emit_report(report, cfg.out_dir, cfg.formats):
        print(path)
    return EXIT_OK


def cmd_train(args) -> int:
    from . import mkl
    from .balance import CboConfig, cbo_oversample

    if not args.model:
        raise UsageError("train needs --model (output path)")
    cfg = _config(args)
    ds = load_experiment_data(cfg)
    train, scaler = scale_unit_interval(ds)
    train = cbo_oversample(train, CboConfig(k_per_class=cfg.cbo_k, seed=cfg.seed))
    grid = cfg.grid_config()
    method = args.method or "smkl"
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        if method in ("svc", "concat"):
            model = mkl.train_concat(train, grid)
            converged = model.converged
        elif method == "fec":
            bank = mkl.train_base_bank(train, mkl.make_specs(train.manifest), grid)
            model = mkl.ensemble_from_bank(bank)
            converged = all(m.converged for m in bank.models)
        elif method == "fmkl":
            model = mkl.train_fmkl(train, grid=grid)
            converged = model.final_svc.converged
        else:
            model = mkl.train_smkl(train, grid=grid, psd_policy=cfg.psd_policy)
            converged = model.final_svc.converged
    meta = {"seed": cfg.seed, "n_train": len(train), "source": cfg.benchmark or cfg.data}
    save_model(args.model, ModelBundle(method, model, scaler, ds.manifest, meta))
    print(args.model)
    if args.strict and not converged:
        print("error: solver did not converge", file=sys.stderr)
        return EXIT_CONVERGENCE
    return EXIT_OK


def cmd_predict(args) -> int:
    if not args.model or not args.input:
        raise UsageError("predict needs --model and --input")
    bundle = load_model(args.model)
    try:
        X = np.loadtxt(args.input, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise DataError(f"{args.input}: {exc}") from exc
    try:
        labels, scores = bundle.predict(X)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    out = sys.stdout
    for label, score in zip(labels, scores):
        out.write(f"{int(label)},{float(score)!r}\n")
    return EXIT_OK


def cmd_inspect(args) -> int:
    if not args.model:
        raise UsageError("inspect needs --model")
    print(json.dumps(load_model(args.model).summary(), indent=2, sort_keys=True))
    return EXIT_OK


HANDLERS = {
    "train": cmd_train, "predict": cmd_predict, "bench": cmd_bench,
    "sweep": cmd_sweep, "kernels": cmd_kernels, "inspect": cmd_inspect,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return HANDLERS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ModelFormatError, FileNotFoundError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
