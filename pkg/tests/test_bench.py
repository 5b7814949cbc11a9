import csv
import json

import numpy as np
import pytest

from kernelforge.bench import (
    ExperimentConfig,
    aggregate,
    emit_report,
    generalization_sweep,
    per_kernel_table,
    run_experiment,
)
from kernelforge.kernels import KernelSpec


def cfg_for(files, **kw):
    data, manifest = files
    kw.setdefault("grid", "small")
    kw.setdefault("repeats", 2)
    kw.setdefault("psd_policy", "warn")
    return ExperimentConfig(data=str(data), manifest=str(manifest), **kw)


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(benchmark="diabetes", repeats=0)
    with pytest.raises(ValueError):
        ExperimentConfig(benchmark="diabetes", train_fraction=1.0)
    with pytest.raises(ValueError):
        ExperimentConfig(benchmark="diabetes", methods=["svm"])
    with pytest.raises(ValueError):
        ExperimentConfig()
    with pytest.raises(ValueError):
        ExperimentConfig.from_json({"benchmark": "diabetes", "color": "red"})


def test_config_json_paths_relative_to_file(tmp_path, small_files):
    doc = {"data": small_files[0].name, "manifest": small_files[1].name, "repeats": 3}
    path = small_files[0].parent / "cfg.json"
    path.write_text(json.dumps(doc))
    cfg = ExperimentConfig.load(path)
    assert cfg.data == str(small_files[0]) and cfg.repeats == 3


@pytest.fixture(scope="module")
def report(tmp_path_factory):
    from conftest import two_group_dataset
    from kernelforge.datasets import save_dataset

    d = tmp_path_factory.mktemp("bench")
    save_dataset(two_group_dataset(), d / "d.csv", d / "d.json")
    cfg = cfg_for((d / "d.csv", d / "d.json"), out_dir=str(d / "out"))
    return cfg, run_experiment(cfg)


def test_every_method_reports(report):
    cfg, rep = report
    assert set(rep.methods) == set(cfg.methods)
    for entry in rep.methods.values():
        assert entry["n_repeats"] == 2 and "std" in entry
        assert 0 <= entry["mean"]["positive.f_measure"] <= 1


def test_means_are_arithmetic_means(report):
    _, rep = report
    for method, entry in rep.methods.items():
        vals = [r["reports"][method]["positive"]["f_measure"] for r in rep.repeats]
        assert abs(entry["mean"]["positive.f_measure"] - np.mean(vals)) <= 1e-12


def test_single_repeat_has_no_std(small_files):
    rep = run_experiment(cfg_for(small_files, repeats=1, methods=["concat"]))
    assert "std" not in rep.methods["concat"]


def test_reports_are_byte_identical(tmp_path, small_files):
    cfg = cfg_for(small_files, methods=["concat", "fec"], out_dir=str(tmp_path / "out"))
    files = ("report.json", "report.csv", "report.md")
    runs = []
    for _ in range(2):
        emit_report(run_experiment(cfg), cfg.out_dir)
        runs.append([(tmp_path / "out" / f).read_bytes() for f in files])
    assert runs[0] == runs[1]
    assert (tmp_path / "out" / "timing.json").exists()


def test_emitted_formats(tmp_path, report):
    _, rep = report
    paths = emit_report(rep, tmp_path)
    names = {p.name for p in paths}
    assert {"report.json", "report.csv", "report.md", "timing.json"} <= names
    assert json.loads((tmp_path / "report.json").read_text()) == json.loads(
        json.dumps(rep.to_json(), sort_keys=True))
    rows = list(csv.DictReader(open(tmp_path / "report.csv")))
    assert len(rows) == len(rep.methods) * 2 * 4
    md = (tmp_path / "report.md").read_text()
    block = md.split("## Positive class")[1].split("##")[0]
    assert sum(line.startswith("| ") and "Method" not in line
               for line in block.splitlines()) == len(rep.methods)


def test_markdown_two_methods_two_rows(small_files, tmp_path):
    rep = run_experiment(cfg_for(small_files, repeats=1, methods=["concat", "fec"]))
    emit_report(rep, tmp_path, formats=("markdown",))
    md = (tmp_path / "report.md").read_text()
    for cls in ("Positive", "Negative"):
        block = md.split(f"## {cls} class")[1].split("##")[0]
        rows = [ln for ln in block.splitlines() if ln.startswith("| ") and "Method" not in ln]
        assert len(rows) == 2


def test_split_purity_is_checked(monkeypatch, small_files):
    import kernelforge.bench as bench
    from kernelforge.datasets import stratified_split

    def leaky(ds, spec):
        train, test = stratified_split(ds, spec)
        return train, ds.take(np.r_[train.index[:1], test.index])

    monkeypatch.setattr(bench, "stratified_split", leaky)
    with pytest.raises(AssertionError, match="share"):
        run_experiment(cfg_for(small_files, repeats=1, methods=["concat"]))


def test_failed_method_does_not_abort(monkeypatch, small_files):
    import kernelforge.bench as bench

    def boom(*a, **k):
        raise RuntimeError("synthetic failure")

    monkeypatch.setattr(bench, "train_fmkl", boom)
    rep = run_experiment(cfg_for(small_files, methods=["concat", "fmkl"]))
    assert rep.methods["fmkl"]["n_failed"] == 2 and "mean" not in rep.methods["fmkl"]
    assert rep.methods["concat"]["n_repeats"] == 2
    assert "synthetic failure" in rep.repeats[0]["errors"]["fmkl"]


def test_per_kernel_duplicate_spec_rows_identical(small_files):
    cfg = cfg_for(small_files)
    spec = KernelSpec("a", "linear")
    rows = per_kernel_table(cfg, specs=[spec, spec, KernelSpec("b", "rbf", 1.0)])
    assert len(rows) == 3
    assert {k: v for k, v in rows[0].items()} == rows[1]
    assert rows[2]["kernel"] == "b-RK"


def test_single_fraction_sweep_matches_experiment(small_files):
    cfg = cfg_for(small_files, repeats=1, methods=["concat"], sweep_fractions=[0.5])
    curve = generalization_sweep(cfg)
    rep = run_experiment(cfg, fraction=0.5)
    assert len(curve) == 1 and curve[0]["fraction"] == 0.5
    assert curve[0]["methods"]["concat"]["f_pos"] == rep.methods["concat"]["mean"]["positive.f_measure"]


def test_sweep_rows_in_csv(tmp_path, small_files):
    cfg = cfg_for(small_files, repeats=1, methods=["concat"], sweep_fractions=[0.4, 0.6])
    rep = run_experiment(cfg)
    rep.sweep = generalization_sweep(cfg)
    emit_report(rep, tmp_path, formats=("csv",))
    rows = list(csv.DictReader(open(tmp_path / "report.csv")))
    assert len(rows) == 1 * 2 * 4 + 2 * 1 * 2
    sweep = list(csv.reader(open(tmp_path / "sweep.csv")))
    assert sweep[0] == ["fraction", "method", "f_pos", "f_neg"] and len(sweep) == 3


def test_aggregate_ignores_failed_repeats():
    from kernelforge.bench import RepeatResult
    from kernelforge.metrics import class_report

    good = RepeatResult(0, 0, reports={"concat": class_report([1, -1], [1, -1], 1, 2)})
    bad = RepeatResult(1, 1, errors={"concat": "x"})
    out = aggregate([good, bad], ["concat"])
    assert out["concat"]["n_repeats"] == 1 and out["concat"]["n_failed"] == 1
    assert out["concat"]["mean"]["positive.f_measure"] == 1.0 and "std" not in out["concat"]
