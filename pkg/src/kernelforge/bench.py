"""Experiment protocol: repeated stratified splits, reports, sweeps.

Each repeat r uses seed ``cfg.seed + r``: stratified split, min/max scaling
fitted on the training part, CBO on the training part only, then every
selected method is trained on the balanced set and scored on the untouched
test part. The base classifier bank is shared by F-EC, F-MKL and S-MKL
within a repeat.

Reports are deterministic for a given config: wall-clock timings live in a
separate ``timing.json`` so ``report.json`` is byte-identical across runs.
"""
from __future__ import annotations

import csv
import json
import time
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .balance import CboConfig, cbo_oversample
from .datasets import (
    DataError,
    Dataset,
    SplitSpec,
    apply_scaler,
    load_dataset,
    scale_unit_interval,
    stratified_split,
    stratified_subsample,
)
from .metrics import ClassReport, class_report
from .mkl import (
    PSD_POLICIES,
    NotPsdError,
    NotPsdWarning,
    ensemble_from_bank,
    make_specs,
    predict_fec,
    predict_fmkl,
    predict_smkl,
    train_base_bank,
    train_concat,
    train_fmkl,
    train_smkl,
)
from .search import GridConfig
from .solver import ConvergenceWarning, predict_csvc

METHODS = ("concat", "fec", "fmkl", "smkl")
METRICS = ("precision", "recall", "f_measure", "sv_fraction")
CLASSES = ("positive", "negative")
FORMATS = ("csv", "json", "markdown")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines an experiment's output.

    The data come from ``data`` + ``manifest`` files or from a bundled
    ``benchmark`` name (see :mod:`kernelforge.benchdata`). ``grid`` is
    ``"full"``, ``"small"`` or a dict of :class:`GridConfig` overrides.
    """

    data: str | None = None
    manifest: str | None = None
    benchmark: str | None = None
    methods: tuple = METHODS
    kinds: tuple = ("linear", "rbf")
    chi2_groups: tuple = ()
    repeats: int = 10
    train_fraction: float = 0.6
    sweep_fractions: tuple = ()
    seed: int = 0
    out_dir: str = "bench-out"
    subsample: int | None = None
    cbo_k: int = 5
    psd_policy: str = "abort"
    grid: object = "full"
    threads: int = 1
    formats: tuple = FORMATS

    def __post_init__(self):
        for name in ("methods", "kinds", "chi2_groups", "sweep_fractions", "formats"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        for frac in (self.train_fraction, *self.sweep_fractions):
            if not 0 < frac < 1:
                raise ValueError(f"fractions must lie in (0, 1), got {frac}")
        unknown = set(self.methods) - set(METHODS)
        if unknown or not self.methods:
            raise ValueError(f"methods must be a non-empty subset of {METHODS}")
        if set(self.formats) - set(FORMATS):
            raise ValueError(f"formats must be a subset of {FORMATS}")
        if self.subsample is not None and self.subsample < 2:
            raise ValueError("subsample must be >= 2")
        if self.psd_policy not in PSD_POLICIES:
            raise ValueError(f"psd_policy must be one of {PSD_POLICIES}")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.data is None and self.benchmark is None:
            raise ValueError("set either data (+ manifest) or benchmark")
        if self.data is not None and self.manifest is None:
            raise ValueError("data needs a manifest")

    @classmethod
    def from_json(cls, doc: dict, base_dir=None) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(doc) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        doc = dict(doc)
        # relative paths in a config file are relative to that file
        if base_dir is not None:
            for key in ("data", "manifest"):
                if doc.get(key) is not None:
                    doc[key] = str(Path(base_dir) / doc[key])
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: invalid JSON config ({exc})") from exc
        return cls.from_json(doc, base_dir=path.parent)

    def to_json(self) -> dict:
        return asdict(self)

    def grid_config(self, seed=None) -> GridConfig:
        if self.grid == "full":
            grid = GridConfig()
        elif self.grid == "small":
            grid = GridConfig.small()
        elif isinstance(self.grid, dict):
            kw = {k: tuple(v) if isinstance(v, list) else v for k, v in self.grid.items()}
            grid = GridConfig(**kw)
        else:
            raise ValueError(f"grid must be 'full', 'small' or a dict, got {self.grid!r}")
        return replace(grid, seed=self.seed if seed is None else seed, n_jobs=self.threads)


def load_experiment_data(cfg: ExperimentConfig) -> Dataset:
    if cfg.benchmark is not None:
        from . import benchdata

        ds = benchdata.load(cfg.benchmark)
    else:
        ds = load_dataset(cfg.data, cfg.manifest)
    ds.require_both_classes()
    if cfg.subsample is not None and cfg.subsample < len(ds):
        ds = stratified_subsample(ds, cfg.subsample, cfg.seed)
    return ds


@dataclass
class RepeatResult:
    repeat: int
    seed: int
    reports: dict = field(default_factory=dict)  # method -> ClassReport
    errors: dict = field(default_factory=dict)  # method -> message
    converged: dict = field(default_factory=dict)  # method -> bool
    timing: dict = field(default_factory=dict)  # method -> {"train_s", "test_s"}
    min_eigenvalue: float | None = None  # S-MKL training Gram


@dataclass
class BenchReport:
    config: dict
    methods: dict
    repeats: list
    per_kernel: list | None = None
    sweep: list | None = None
    timing: dict = field(default_factory=dict)

    @property
    def all_converged(self) -> bool:
        return all(all(r["converged"].values()) for r in self.repeats)

    def to_json(self) -> dict:
        return {
            "config": self.config,
            "methods": self.methods,
            "repeats": self.repeats,
            "per_kernel": self.per_kernel,
            "sweep": self.sweep,
        }


def _prepare(ds: Dataset, fraction: float, seed: int, cbo_k: int):
    train, test = stratified_split(ds, SplitSpec(fraction, seed))
    # test-set purity: nothing from the test part may reach training
    if np.intersect1d(train.index, test.index).size:
        raise AssertionError("train and test splits share instances")
    train, scaler = scale_unit_interval(train)
    test = apply_scaler(test, scaler)
    balanced = cbo_oversample(train, CboConfig(k_per_class=cbo_k, seed=seed))
    if not np.isin(balanced.index, train.index).all():
        raise AssertionError("oversampling introduced rows from outside the training split")
    return balanced, test


def _fit_methods(cfg, balanced, test, grid, result: RepeatResult):
    specs = make_specs(balanced.manifest, cfg.kinds, cfg.chi2_groups)
    bank = None
    n = len(balanced)
    for method in cfg.methods:
        t0 = time.perf_counter()
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ConvergenceWarning)
                warnings.simplefilter("ignore", NotPsdWarning)
                if method in ("fec", "fmkl", "smkl") and bank is None:
                    bank = train_base_bank(balanced, specs, grid)
                if method == "concat":
                    model = train_concat(balanced, grid)
                    t1 = time.perf_counter()
                    labels, _ = predict_csvc(model, test.X)
                    n_sv, ok = model.n_sv, model.converged
                elif method == "fec":
                    model = ensemble_from_bank(bank)
                    t1 = time.perf_counter()
                    labels, _ = predict_fec(model, test.X)
                    n_sv = model.sv_fraction * n
                    ok = all(m.converged for m in bank.models)
                elif method == "fmkl":
                    model = train_fmkl(balanced, grid=grid, bank=bank)
                    t1 = time.perf_counter()
                    labels, _ = predict_fmkl(model, test.X)
                    n_sv, ok = model.final_svc.n_sv, model.final_svc.converged
                else:
                    model = train_smkl(balanced, grid=grid, bank=bank, psd_policy=cfg.psd_policy)
                    result.min_eigenvalue = model.min_eigenvalue
                    t1 = time.perf_counter()
                    labels, _ = predict_smkl(model, test.X)
                    n_sv, ok = model.final_svc.n_sv, model.final_svc.converged
        except (NotPsdError, DataError, ValueError, RuntimeError, ArithmeticError,
                np.linalg.LinAlgError) as exc:
            result.errors[method] = f"{type(exc).__name__}: {exc}"
            continue
        t2 = time.perf_counter()
        result.reports[method] = class_report(labels, test.y, n_sv, n)
        result.converged[method] = bool(ok)
        result.timing[method] = {"train_s": t1 - t0, "test_s": t2 - t1}


def _run_repeat(cfg, ds, fraction, r) -> RepeatResult:
    seed = cfg.seed + r
    result = RepeatResult(repeat=r, seed=seed)
    try:
        balanced, test = _prepare(ds, fraction, seed, cfg.cbo_k)
    except DataError as exc:
        result.errors = {m: f"DataError: {exc}" for m in cfg.methods}
        return result
    _fit_methods(cfg, balanced, test, cfg.grid_config(seed), result)
    return result


def _flat(report: ClassReport) -> dict:
    out = {}
    for cls in CLASSES:
        m = getattr(report, cls)
        for metric in ("precision", "recall", "f_measure"):
            out[f"{cls}.{metric}"] = getattr(m, metric)
    out["sv_fraction"] = report.sv_fraction
    return out


def aggregate(results, methods) -> dict:
    """Mean (and sample std when >1 repeat succeeded) per method and field."""
    out = {}
    for method in methods:
        rows = [_flat(r.reports[method]) for r in results if method in r.reports]
        entry = {"n_repeats": len(rows), "n_failed": len(results) - len(rows)}
        if rows:
            keys = sorted(rows[0])
            entry["mean"] = {k: float(np.mean([row[k] for row in rows])) for k in keys}
            if len(rows) > 1:
                entry["std"] = {k: float(np.std([row[k] for row in rows], ddof=1)) for k in keys}
        out[method] = entry
    return out


def _timing(results, methods) -> dict:
    out = {}
    for method in methods:
        rows = [r.timing[method] for r in results if method in r.timing]
        if rows:
            out[method] = {k: float(np.mean([row[k] for row in rows])) for k in ("train_s", "test_s")}
    return out


def _repeat_doc(r: RepeatResult) -> dict:
    return {
        "repeat": r.repeat,
        "seed": r.seed,
        "reports": {m: rep.to_json() for m, rep in sorted(r.reports.items())},
        "errors": dict(sorted(r.errors.items())),
        "converged": dict(sorted(r.converged.items())),
        "smkl_min_eigenvalue": r.min_eigenvalue,
    }


def run_experiment(cfg: ExperimentConfig, dataset: Dataset | None = None,
                   *, fraction: float | None = None) -> BenchReport:
    ds = load_experiment_data(cfg) if dataset is None else dataset
    fraction = cfg.train_fraction if fraction is None else fraction
    results = [_run_repeat(cfg, ds, fraction, r) for r in range(cfg.repeats)]
    return BenchReport(
        config=cfg.to_json(),
        methods=aggregate(results, cfg.methods),
        repeats=[_repeat_doc(r) for r in results],
        timing=_timing(results, cfg.methods),
    )


def per_kernel_table(cfg: ExperimentConfig, dataset: Dataset | None = None, specs=None) -> list:
    """Single split (seed ``cfg.seed``): one tuned C-SVC per kernel spec,
    scored on the test part. Rows follow spec order."""
    ds = load_experiment_data(cfg) if dataset is None else dataset
    balanced, test = _prepare(ds, cfg.train_fraction, cfg.seed, cfg.cbo_k)
    if specs is None:
        specs = make_specs(balanced.manifest, cfg.kinds, cfg.chi2_groups)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        bank = train_base_bank(balanced, specs, cfg.grid_config())
    rows = []
    for spec, model in zip(bank.specs, bank.models):
        labels, _ = predict_csvc(model, test.X)
        rep = class_report(labels, test.y, model.n_sv, len(balanced))
        rows.append({
            "kernel": spec.label,
            "spec": spec.to_json(),
            "c": model.c,
            "positive": asdict(rep.positive),
            "negative": asdict(rep.negative),
            "sv_fraction": rep.sv_fraction,
        })
    for spec, msg in bank.dropped:
        rows.append({"kernel": spec.label, "spec": spec.to_json(), "error": msg})
    return rows


def generalization_sweep(cfg: ExperimentConfig, dataset: Dataset | None = None) -> list:
    """Run the protocol at each training fraction; mean F+/F- per method."""
    if not cfg.sweep_fractions:
        raise ValueError("sweep_fractions is empty")
    ds = load_experiment_data(cfg) if dataset is None else dataset
    curve = []
    for frac in cfg.sweep_fractions:
        rep = run_experiment(cfg, ds, fraction=frac)
        point = {"fraction": frac, "methods": {}}
        for method, entry in rep.methods.items():
            if "mean" in entry:
                point["methods"][method] = {
                    "f_pos": entry["mean"]["positive.f_measure"],
                    "f_neg": entry["mean"]["negative.f_measure"],
                }
        curve.append(point)
    return curve


# -- report emission --------------------------------------------------------


def _csv_rows(report: BenchReport):
    for method, entry in report.methods.items():
        mean, std = entry.get("mean"), entry.get("std")
        for cls in CLASSES:
            for metric in METRICS:
                key = "sv_fraction" if metric == "sv_fraction" else f"{cls}.{metric}"
                yield {
                    "section": "summary", "method": method, "class": cls, "metric": metric,
                    "fraction": "", "mean": "" if mean is None else repr(mean[key]),
                    "std": "" if std is None else repr(std[key]),
                }
    for point in report.sweep or []:
        for method, vals in point["methods"].items():
            for cls, key in (("positive", "f_pos"), ("negative", "f_neg")):
                yield {
                    "section": "sweep", "method": method, "class": cls, "metric": "f_measure",
                    "fraction": repr(point["fraction"]), "mean": repr(vals[key]), "std": "",
                }


def _cell(entry, key):
    if "mean" not in entry:
        return "failed"
    text = f"{entry['mean'][key]:.4f}"
    if "std" in entry:
        text += f" ({entry['std'][key]:.4f})"
    return text


def render_markdown(report: BenchReport) -> str:
    cfg = report.config
    source = cfg.get("benchmark") or cfg.get("data")
    lines = [f"# Benchmark report: {source}", "",
             f"repeats: {cfg['repeats']}, train fraction: {cfg['train_fraction']}, "
             f"seed: {cfg['seed']}", ""]
    for cls in CLASSES:
        lines += [f"## {cls.capitalize()} class", "",
                  "| Method | Precision | Recall | F-measure | SV fraction |",
                  "|---|---|---|---|---|"]
        for method, entry in report.methods.items():
            cells = [_cell(entry, f"{cls}.{m}") for m in ("precision", "recall", "f_measure")]
            cells.append(_cell(entry, "sv_fraction"))
            lines.append(f"| {method} | " + " | ".join(cells) + " |")
        lines.append("")
    if report.per_kernel:
        lines += ["## Per-kernel performance", "",
                  "| Kernel | P+ | R+ | F+ | P- | R- | F- |", "|---|---|---|---|---|---|---|"]
        for row in report.per_kernel:
            if "error" in row:
                lines.append(f"| {row['kernel']} | dropped: {row['error']} |||||| ")
                continue
            p, n = row["positive"], row["negative"]
            vals = [p["precision"], p["recall"], p["f_measure"],
                    n["precision"], n["recall"], n["f_measure"]]
            lines.append(f"| {row['kernel']} | " + " | ".join(f"{v:.4f}" for v in vals) + " |")
        lines.append("")
    if report.sweep:
        methods = sorted({m for p in report.sweep for m in p["methods"]})
        lines += ["## Generalization (F+ / F-)", "",
                  "| Train fraction | " + " | ".join(methods) + " |",
                  "|---|" + "---|" * len(methods)]
        for p in report.sweep:
            cells = []
            for m in methods:
                v = p["methods"].get(m)
                cells.append("failed" if v is None else f"{v['f_pos']:.3f} / {v['f_neg']:.3f}")
            lines.append(f"| {p['fraction']} | " + " | ".join(cells) + " |")
        lines.append("")
    failures = [(r["repeat"], m, e) for r in report.repeats for m, e in r["errors"].items()]
    if failures:
        lines += ["## Failures", ""]
        lines += [f"- repeat {r}, {m}: {e}" for r, m, e in failures]
        lines.append("")
    return "\n".join(lines)


def emit_report(report: BenchReport, out_dir, formats=FORMATS) -> list:
    """Write the requested formats into ``out_dir``; return the paths written."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    written = []
    if "json" in formats:
        path = out / "report.json"
        path.write_text(json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n")
        written.append(path)
        if report.timing:
            path = out / "timing.json"
            path.write_text(json.dumps(report.timing, indent=2, sort_keys=True) + "\n")
            written.append(path)
    if "csv" in formats:
        path = out / "report.csv"
        cols = ["section", "method", "class", "metric", "fraction", "mean", "std"]
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
            writer.writeheader()
            writer.writerows(_csv_rows(report))
        written.append(path)
        if report.sweep:
            path = out / "sweep.csv"
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["fraction", "method", "f_pos", "f_neg"])
                for p in report.sweep:
                    for m, v in sorted(p["methods"].items()):
                        writer.writerow([repr(p["fraction"]), m, repr(v["f_pos"]), repr(v["f_neg"])])
            written.append(path)
    if "markdown" in formats:
        path = out / "report.md"
        path.write_text(render_markdown(report))
        written.append(path)
    return written
