import warnings

import numpy as np
import pytest

from kernelforge.benchdata import toy_dataset
from kernelforge.datasets import Dataset, FeatureManifest, scale_unit_interval
from kernelforge.kernels import KernelSpec, ViewKernel, min_eigenvalue
from kernelforge.metrics import class_report
from kernelforge.mkl import (
    CombinedKernel,
    EnsembleModel,
    NotPsdError,
    NotPsdWarning,
    SuccessRegressorBank,
    combine_grams,
    combined_kernel_eval,
    compute_success_labels,
    ensemble_from_bank,
    f_measure_weights,
    fit_success_regressors,
    make_specs,
    predict_fec,
    predict_fmkl,
    predict_smkl,
    train_base_bank,
    train_concat,
    train_fmkl,
    train_smkl,
)
from kernelforge.search import GridConfig
from kernelforge.solver import TrainConfig, constant_svr, predict_csvc, train_csvc

GRID = GridConfig.small()


@pytest.fixture(scope="module")
def toy():
    ds = toy_dataset(n_per_class=250, seed=3)
    train, scaler = scale_unit_interval(ds.take(np.arange(300)))
    test = Dataset(scaler.transform(ds.X[300:]), ds.y[300:], ds.manifest)
    return train, test


@pytest.fixture(scope="module")
def toy_smkl(toy):
    train, _ = toy
    specs = [KernelSpec("xy", "linear"), KernelSpec("xy", "rbf", 1.0)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return train_smkl(train, specs, GRID, psd_policy="warn")


def test_commercials_style_manifest_gives_26_specs():
    names = [f"g{i}" for i in range(11)]
    manifest = FeatureManifest(tuple((n, 3) for n in names))
    specs = make_specs(manifest, chi2_groups=names[:4])
    assert len(specs) == 26
    assert sum(s.kind == "chi2" for s in specs) == 4
    with pytest.raises(KeyError):
        make_specs(manifest, chi2_groups=["nope"])


def test_combined_kernel_uniform_weights_is_mean():
    base = [np.full((1, 1), 0.2), np.full((1, 1), 0.6)]
    ones = np.ones((2, 1))
    assert combine_grams(base, ones, ones)[0, 0] == pytest.approx(0.4, abs=1e-15)


def test_combined_kernel_selects_weighted_kernel():
    base = [np.full((1, 1), 0.2), np.full((1, 1), 0.6)]
    w = np.array([[1.0], [0.0]])
    assert combine_grams(base, w, w)[0, 0] == 0.2


def test_combined_kernel_all_zero_weights_falls_back():
    base = [np.full((1, 1), 0.2), np.full((1, 1), 0.6)]
    zero = np.zeros((2, 1))
    assert combine_grams(base, zero, zero)[0, 0] == pytest.approx(0.4)


def test_combined_kernel_symmetry():
    rng = np.random.default_rng(0)
    X = rng.random((12, 3))
    base = [X @ X.T, np.exp(-((X[:, None] - X[None]) ** 2).sum(-1))]
    W = rng.random((2, 12))
    K = combine_grams(base, W, W)
    assert np.max(np.abs(K - K.T)) <= 1e-12


def _constant_bank(values, n):
    regs = [constant_svr(v, n) for v in values]
    return SuccessRegressorBank(regs, np.zeros(len(regs)), np.zeros(len(regs)))


def test_single_kernel_with_unit_success_degenerates_to_svc():
    rng = np.random.default_rng(1)
    X = rng.random((30, 2))
    y = np.where(X[:, 0] > 0.5, 1, -1)
    manifest = FeatureManifest.single(2)
    k = ViewKernel.bind(KernelSpec("all", "rbf", 2.0), manifest)
    K = CombinedKernel((k,), _constant_bank([1.0], 30))(X, X)
    assert np.max(np.abs(K - k(X, X))) <= 1e-12
    cfg = TrainConfig(c=4, tol=1e-6)
    a = train_csvc(K, y, cfg)
    b = train_csvc(k(X, X), y, cfg)
    np.testing.assert_allclose(a.decision_function(K=K), b.decision_function(K=K), atol=1e-6)


def test_f_measure_weights_examples():
    assert f_measure_weights([1, 1]).tolist() == [0.5, 0.5]
    np.testing.assert_allclose(f_measure_weights([0.9, 0.1]), [0.9, 0.1], atol=1e-15)
    assert f_measure_weights([0, 0]).tolist() == [0.5, 0.5]


class _Stub:
    def __init__(self, value):
        self.value = value

    def decision_function(self, X):
        return np.full(len(np.atleast_2d(X)), self.value)


def _stub_bank(values):
    from kernelforge.mkl import BaseClassifierBank

    specs = [KernelSpec("all", "linear") for _ in values]
    return BaseClassifierBank(specs, [_Stub(v) for v in values], np.ones(len(values)),
                              np.ones(len(values)))


def test_fec_votes():
    agree = EnsembleModel(_stub_bank([1.0, 2.0]), np.array([0.1, 0.2]))
    assert predict_fec(agree, np.zeros((1, 1)))[0][0] == 1
    split = EnsembleModel(_stub_bank([-1.0, 1.0]), np.array([0.8, 0.1]))
    assert predict_fec(split, np.zeros((1, 1)))[0][0] == -1
    tie = EnsembleModel(_stub_bank([-1.0, 1.0]), np.array([0.5, 0.5]))
    assert predict_fec(tie, np.zeros((1, 1)))[0][0] == 1


def test_success_labels_mark_mistakes():
    bank = _stub_bank([1.0, -1.0])
    train = Dataset(np.zeros((3, 1)), [1, -1, 1], FeatureManifest.single(1))
    assert compute_success_labels(bank, train).tolist() == [[1, 0, 1], [0, 1, 0]]


def test_constant_success_labels_need_no_solve():
    train = Dataset(np.random.default_rng(0).random((10, 1)), [1, -1] * 5,
                    FeatureManifest.single(1))
    specs = [KernelSpec("all", "linear")] * 2
    labels = np.vstack([np.ones(10), np.zeros(10)])
    bank = fit_success_regressors(train, specs, labels, GRID)
    W = bank.predict(np.random.default_rng(1).random((5, 1)))
    assert W[0].tolist() == [1.0] * 5 and W[1].tolist() == [0.0] * 5


def test_separable_single_spec_has_unit_eta():
    X = np.r_[np.linspace(0, 0.3, 10), np.linspace(0.7, 1, 10)][:, None]
    y = np.r_[-np.ones(10), np.ones(10)]
    bank = train_base_bank(Dataset(X, y, FeatureManifest.single(1)),
                           [KernelSpec("all", "linear")], GRID)
    assert bank.f_measures.tolist() == [1.0]


def test_failed_spec_is_dropped():
    X = np.random.default_rng(0).random((20, 2))
    y = np.where(X[:, 0] > 0.5, 1, -1)
    manifest = FeatureManifest((("a", 1), ("b", 1)))
    # chi2 needs non-negative inputs, so shift group b below zero
    X[:, 1] -= 5
    specs = [KernelSpec("a", "linear"), KernelSpec("b", "chi2", 1.0)]
    with pytest.warns(RuntimeWarning, match="dropping"):
        bank = train_base_bank(Dataset(X, y, manifest), specs, GRID)
    assert len(bank) == 1 and bank.dropped[0][0].kind == "chi2"


def test_success_weights_are_clamped_and_informative(toy, toy_smkl):
    train, _ = toy
    model = toy_smkl
    W = model.success.predict(train.X)
    assert W.min() >= 0 and W.max() <= 1
    labels = compute_success_labels(model.bank, train)
    assert np.all(model.success.train_mse <= model.success.baseline_mse + 1e-12)
    for s in range(len(model.bank)):
        if model.success.regressors[s].n_sv == 0:
            continue  # constant fallback carries no local information
        wrong, right = W[s][labels[s] == 0], W[s][labels[s] == 1]
        if wrong.size and right.size:
            assert wrong.mean() < right.mean()


def test_smkl_predicts_and_matches_kernel_eval(toy, toy_smkl):
    train, test = toy
    model = toy_smkl
    labels, scores = predict_smkl(model, test.X)
    assert set(np.unique(labels)) <= {-1, 1}
    svc = model.final_svc
    x = test.X[:1]
    direct = sum(c * combined_kernel_eval(model, x, sv)
                 for c, sv in zip(svc.dual_coef, svc.support_vectors)) + svc.bias
    assert direct == pytest.approx(scores[0], abs=1e-9)
    # the overlap half of the toy caps any classifier well below 1.0
    train_acc = np.mean(predict_smkl(model, train.X)[0] == train.y)
    base = [np.mean(predict_csvc(m, train.X)[0] == train.y) for m in model.bank.models]
    assert train_acc >= min(base)


def test_normalized_combination_can_be_indefinite():
    # point 0 trusts only the all-ones kernel, points 1 and 2 mostly the
    # identity kernel: K = [[1, 1, 1], [1, 1, .2], [1, .2, 1]], det = -0.64
    base = [np.ones((3, 3)), np.eye(3)]
    W = np.array([[0.5, 0.5, 0.5], [0.0, 1.0, 1.0]])
    K = combine_grams(base, W, W)
    np.testing.assert_allclose(K, [[1, 1, 1], [1, 1, 0.2], [1, 0.2, 1]], atol=1e-15)
    assert np.linalg.det(K) == pytest.approx(-0.64)
    assert min_eigenvalue(K) < 0
    # the unnormalized numerator of the same combination is PSD
    num = sum(w[:, None] * k * w[None, :] for w, k in zip(W, base))
    assert np.linalg.eigvalsh(num)[0] >= -1e-12


def test_psd_abort_policy(toy, toy_smkl, monkeypatch):
    import kernelforge.mkl as mkl

    train, _ = toy
    monkeypatch.setattr(mkl, "min_eigenvalue", lambda K: -1.0)
    with pytest.raises(NotPsdError, match="-1.000e"):
        train_smkl(train, grid=GRID, bank=toy_smkl.bank, success=toy_smkl.success)
    with pytest.warns(NotPsdWarning):
        m = train_smkl(train, grid=GRID, bank=toy_smkl.bank, success=toy_smkl.success,
                       psd_policy="warn")
    assert m.min_eigenvalue == -1.0 and m.psd_policy == "warn"
    with pytest.raises(ValueError):
        train_smkl(train, grid=GRID, bank=toy_smkl.bank, psd_policy="ignore")


def test_fmkl_beta_simplex_and_baselines(toy, toy_smkl):
    train, test = toy
    fm = train_fmkl(train, grid=GRID, bank=toy_smkl.bank)
    assert np.all(fm.beta >= 0) and abs(fm.beta.sum() - 1) <= 1e-12
    for labels in (predict_fmkl(fm, test.X)[0],
                   predict_fec(ensemble_from_bank(toy_smkl.bank), test.X)[0],
                   predict_csvc(train_concat(train, GRID), test.X)[0]):
        assert class_report(labels, test.y).positive.f_measure >= 0.7
