"""Walk through S-MKL on the 2-D toy set, one stage at a time.

    python demos/toy_walkthrough.py

Uses the coarse grid, so the whole thing runs in about half a minute.
"""
import warnings

import numpy as np

from kernelforge.balance import cbo_oversample
from kernelforge.benchdata import toy_dataset
from kernelforge.datasets import SplitSpec, apply_scaler, scale_unit_interval, stratified_split
from kernelforge.kernels import KernelSpec
from kernelforge.mkl import (
    NotPsdWarning,
    compute_success_labels,
    fit_success_regressors,
    predict_smkl,
    train_base_bank,
    train_smkl,
)
from kernelforge.search import GridConfig
from kernelforge.solver import predict_csvc

ds = toy_dataset(n_per_class=750, seed=0)
train, test = stratified_split(ds, SplitSpec(0.6, seed=0))
train, scaler = scale_unit_interval(train)
test = apply_scaler(test, scaler)
train = cbo_oversample(train)
print(f"train {len(train.y)} rows after CBO, test {len(test.y)}")

# one linear and one RBF base classifier on the same two columns
specs = [KernelSpec("xy", "linear"), KernelSpec("xy", "rbf", 1.0)]
grid = GridConfig.small()
bank = train_base_bank(train, specs, grid)
for spec, model, eta in zip(bank.specs, bank.models, bank.f_measures):
    acc = np.mean(predict_csvc(model, test.X)[0] == test.y)
    print(f"{spec.label:6s} held-out F {eta:.3f}  test acc {acc:.3f}  SVs {model.n_sv}")

# success labels: 1 where a base classifier gets its own training row right
labels = compute_success_labels(bank, train)
print("training rows each base classifier gets right:", labels.mean(axis=1).round(3))

# the success regressors learn where each kernel can be trusted
success = fit_success_regressors(train, specs, labels, grid)
W = success.predict(train.X)
# a regressor that cannot beat the mean success rate is replaced by it
for spec, reg, mse, base in zip(specs, success.regressors, success.train_mse, success.baseline_mse):
    kind = "constant" if reg.n_sv == 0 else f"{reg.n_sv} SVs"
    print(f"{spec.label:6s} regressor: {kind}, train MSE {mse:.3f} (mean predictor {base:.3f})")
for s, spec in enumerate(specs):
    right, wrong = W[s][labels[s] == 1].mean(), W[s][labels[s] == 0].mean()
    print(f"{spec.label:6s} mean g on correct rows {right:.3f}, on mistakes {wrong:.3f}")

# left half (noisy, linear boundary) versus right half (clean, curved)
left = train.X[:, 0] < 0.5
print("mean g, left half :", W[:, left].mean(axis=1).round(3))
print("mean g, right half:", W[:, ~left].mean(axis=1).round(3))

# the combined Gram is usually slightly indefinite; "warn" records how much
with warnings.catch_warnings(record=True) as caught:
    warnings.simplefilter("always", NotPsdWarning)
    model = train_smkl(train, specs, grid, bank=bank, success=success, psd_policy="warn")
for w in caught:
    if issubclass(w.category, NotPsdWarning):
        print("warning:", w.message)
print(f"min eigenvalue of the training Gram {model.min_eigenvalue:.3g}")

pred, _ = predict_smkl(model, test.X)
print(f"S-MKL test acc {np.mean(pred == test.y):.3f}  SVs {model.final_svc.n_sv}")
