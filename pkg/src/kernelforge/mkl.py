"""Success-based locally weighted multiple kernel learning and baselines.

Pipeline for S-MKL on a balanced, scaled training set:

1. one C-SVC per base kernel (feature group x kernel type);
2. success labels: 1 where that classifier gets its own training row right;
3. one RBF epsilon-SVR per base kernel fitted to those labels, clamped to
   [0, 1], giving the weighting functions g_s;
4. a final C-SVC on the combined kernel

       K(x, x') = sum_s g_s(x) k_s(x, x') g_s(x') / sum_s g_s(x) g_s(x')

Baselines sharing the same base bank: F-MKL (fixed weights proportional to
each base classifier's cross-validated F-measure), F-EC (F-measure weighted
vote) and Concat (one RBF C-SVC on all columns).
"""
from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .datasets import Dataset
from .kernels import KernelSpec, ViewKernel, kernel_matrix, min_eigenvalue
from .metrics import f_measure
from .search import GridConfig, compress_rows, group_folds, tune_svc, tune_svr
from .solver import (
    ConvergenceWarning,
    SvcModel,
    constant_svr,
    expand_compressed,
    predict_csvc,
    train_csvc,
    train_epsilon_svr,
)

FALLBACK_THRESHOLD = 1e-9
# placeholder gamma for specs whose gamma is picked by grid search
UNTUNED_GAMMA = 1.0


PSD_POLICIES = ("abort", "warn")


class NotPsdWarning(UserWarning):
    pass


class NotPsdError(RuntimeError):
    """The combined-kernel training Gram failed the empirical PSD check."""

    def __init__(self, min_eig, n):
        self.min_eig = min_eig
        self.n = n
        super().__init__(
            f"combined kernel Gram is not PSD: most negative eigenvalue "
            f"{min_eig:.3e} < {-1e-6 * n:.3e} (n={n})"
        )


def make_specs(manifest, kinds=("linear", "rbf"), chi2_groups=()) -> list:
    """One spec per (group, kind), plus chi-square for the listed groups."""
    specs = []
    chi2_groups = set(chi2_groups)
    unknown = chi2_groups - set(manifest.names)
    if unknown:
        raise KeyError(f"chi2 groups not in manifest: {sorted(unknown)}")
    for name in manifest.names:
        for kind in kinds:
            specs.append(KernelSpec(name, kind, None if kind == "linear" else UNTUNED_GAMMA))
        if name in chi2_groups and "chi2" not in kinds:
            specs.append(KernelSpec(name, "chi2", UNTUNED_GAMMA))
    return specs


def _map(fn, items, n_jobs):
    if n_jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, items))


def _folds(train: Dataset, grid: GridConfig, stratified=True):
    return group_folds(train.y, train.index, grid.folds, grid.seed, stratified)


# -- base classifiers -------------------------------------------------------


@dataclass
class BaseClassifierBank:
    specs: list
    models: list
    f_measures: np.ndarray
    cv_scores: np.ndarray
    dropped: list = field(default_factory=list)

    def __post_init__(self):
        if not self.specs:
            raise ValueError("a classifier bank needs at least one kernel")
        if len(self.models) != len(self.specs):
            raise ValueError("one model per kernel spec")

    @property
    def kernels(self) -> list:
        return [m.kernel for m in self.models]

    def __len__(self):
        return len(self.specs)

    def decision_values(self, X) -> np.ndarray:
        """(q, m) matrix of base decision values."""
        return np.vstack([m.decision_function(X) for m in self.models])

    def predictions(self, X) -> np.ndarray:
        return np.where(self.decision_values(X) >= 0, 1, -1)


def _gamma_grid(spec, grid):
    return [None] if spec.kind == "linear" else list(grid.gamma_grid)


def _spec_grams(view_kernel: ViewKernel, X, gammas):
    V = view_kernel.view(X)
    for g in gammas:
        spec = view_kernel.spec if g is None else view_kernel.spec.with_gamma(g)
        yield g, kernel_matrix(spec, V, V)


def _fit_compressed(train_fn, kernel, X, targets, cfg, view):
    """Train on distinct (view, target) rows with multiplicity weights."""
    comp = compress_rows(targets, view)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        model = train_fn(kernel, targets[comp.reps], cfg, X=X[comp.reps], weights=comp.weights)
    return expand_compressed(model, comp)


def _fit_base(spec, train, grid, folds, tune_gamma):
    gammas = _gamma_grid(spec, grid) if tune_gamma else [spec.gamma]
    bound = ViewKernel.bind(spec, train.manifest)
    V = bound.view(train.X)
    comp = compress_rows(folds, train.y, V)
    grams = _spec_grams(bound, train.X[comp.reps], gammas)
    gamma, c, score, oof = tune_svc(grams, train.y, folds, grid, comp)
    tuned = spec if gamma is None else spec.with_gamma(gamma)
    kernel = ViewKernel.bind(tuned, train.manifest)
    model = _fit_compressed(train_csvc, kernel, train.X, train.y, grid.train_config(c), V)
    eta = f_measure(oof, train.y, 1)
    return tuned, model, eta, score


def train_base_bank(train: Dataset, specs, grid: GridConfig = GridConfig(),
                    tune_gamma=True) -> BaseClassifierBank:
    """One grid-searched C-SVC per kernel spec on that spec's feature view.

    eta (``f_measures``) is the positive-class F-measure of the
    out-of-fold predictions at the chosen grid point. A spec whose training
    raises is dropped with a warning.
    """
    train.require_both_classes()
    folds = _folds(train, grid)

    def fit(spec):
        try:
            return _fit_base(spec, train, grid, folds, tune_gamma)
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            return exc

    results = _map(fit, list(specs), grid.n_jobs)
    kept, dropped = [], []
    for spec, res in zip(specs, results):
        if isinstance(res, Exception):
            warnings.warn(f"dropping kernel {spec.label}: {res}", RuntimeWarning, stacklevel=2)
            dropped.append((spec, str(res)))
        else:
            kept.append(res)
    if not kept:
        raise RuntimeError("every kernel spec failed to train")
    return BaseClassifierBank(
        specs=[r[0] for r in kept],
        models=[r[1] for r in kept],
        f_measures=np.array([r[2] for r in kept]),
        cv_scores=np.array([r[3] for r in kept]),
        dropped=dropped,
    )


def compute_success_labels(bank: BaseClassifierBank, train: Dataset) -> np.ndarray:
    """(q, n) 0/1 matrix: does classifier s predict row i's label?"""
    return (bank.predictions(train.X) == train.y[None, :]).astype(np.int64)


# -- success regressors -----------------------------------------------------


@dataclass
class SuccessRegressorBank:
    regressors: list
    train_mse: np.ndarray
    baseline_mse: np.ndarray

    def raw(self, X) -> np.ndarray:
        return np.vstack([r.decision_function(X) for r in self.regressors])

    def predict(self, X) -> np.ndarray:
        """(q, m) success weights clamped to [0, 1]."""
        return np.clip(self.raw(X), 0.0, 1.0)


def _fit_success(spec, train, z, grid, folds):
    n = len(train)
    baseline = float(np.mean((z - z.mean()) ** 2))
    if np.all(z == z[0]):
        return constant_svr(float(z[0]), n), 0.0, baseline
    rbf = ViewKernel.bind(KernelSpec(spec.group, "rbf", UNTUNED_GAMMA), train.manifest)
    V = rbf.view(train.X)
    comp = compress_rows(folds, z, V)
    grams = _spec_grams(rbf, train.X[comp.reps], grid.gamma_grid)
    gamma, c, eps, _ = tune_svr(grams, z, folds, grid, comp)
    kernel = ViewKernel.bind(KernelSpec(spec.group, "rbf", gamma), train.manifest)
    model = _fit_compressed(train_epsilon_svr, kernel, train.X, z, grid.train_config(c, eps), V)
    fitted = np.clip(model.decision_function(train.X), 0.0, 1.0)
    mse = float(np.mean((fitted - z) ** 2))
    if mse > baseline:
        # never worse than predicting the mean success rate
        return constant_svr(float(z.mean()), n), baseline, baseline
    return model, mse, baseline


def fit_success_regressors(train: Dataset, specs, labels, grid: GridConfig = GridConfig()):
    """RBF epsilon-SVR per spec, fitted to that spec's 0/1 success labels."""
    labels = np.asarray(labels, dtype=float)
    if labels.shape != (len(specs), len(train)):
        raise ValueError(f"labels must have shape {(len(specs), len(train))}")
    folds = _folds(train, grid, stratified=False)
    results = _map(lambda s: _fit_success(specs[s], train, labels[s], grid, folds),
                   list(range(len(specs))), grid.n_jobs)
    return SuccessRegressorBank(
        regressors=[r[0] for r in results],
        train_mse=np.array([r[1] for r in results]),
        baseline_mse=np.array([r[2] for r in results]),
    )


# -- combined kernel --------------------------------------------------------


def combine_grams(base, WA, WB, threshold=FALLBACK_THRESHOLD) -> np.ndarray:
    """Success-weighted normalized sum of base Grams.

    ``base`` is a sequence of q arrays of shape (a, b); ``WA`` (q, a) and
    ``WB`` (q, b) are the weights at the row and column points. Where the
    normalizer falls below ``threshold`` the plain mean of the base kernels
    is used instead.
    """
    WA = np.asarray(WA, dtype=float)
    WB = np.asarray(WB, dtype=float)
    num = np.zeros_like(base[0], dtype=float)
    mean = np.zeros_like(num)
    for s, Ks in enumerate(base):
        num += WA[s][:, None] * Ks * WB[s][None, :]
        mean += Ks
    mean /= len(base)
    den = WA.T @ WB
    small = den < threshold
    out = num / np.where(small, 1.0, den)
    out[small] = mean[small]
    return out


@dataclass(frozen=True)
class CombinedKernel:
    """Callable form of the combined kernel over full instance rows."""

    kernels: tuple
    success: SuccessRegressorBank

    def base_grams(self, A, B):
        return [k(A, B) for k in self.kernels]

    def __call__(self, A, B, WA=None, WB=None) -> np.ndarray:
        A = np.atleast_2d(A)
        B = np.atleast_2d(B)
        WA = self.success.predict(A) if WA is None else WA
        WB = self.success.predict(B) if WB is None else WB
        return combine_grams(self.base_grams(A, B), WA, WB)


@dataclass(frozen=True)
class WeightedSumKernel:
    kernels: tuple
    weights: np.ndarray

    def __call__(self, A, B) -> np.ndarray:
        A = np.atleast_2d(A)
        B = np.atleast_2d(B)
        return sum(w * k(A, B) for w, k in zip(self.weights, self.kernels))


@dataclass
class SmklModel:
    bank: BaseClassifierBank
    success: SuccessRegressorBank
    final_svc: SvcModel
    sv_weights: np.ndarray  # (q, n_sv) success weights at the support vectors
    min_eigenvalue: float = float("nan")
    psd_policy: str = "abort"
    fallback_policy: str = "uniform mean of base kernels when sum_s g_s(x) g_s(x') < 1e-9"

    @property
    def kernel(self) -> CombinedKernel:
        return self.final_svc.kernel


def combined_kernel_eval(model: SmklModel, x, xi) -> float:
    return float(model.kernel(np.atleast_2d(x), np.atleast_2d(xi))[0, 0])


def _tune_fixed(K, train, grid):
    folds = _folds(train, grid)
    comp = compress_rows(folds, train.y, train.X)
    Kc = K[np.ix_(comp.reps, comp.reps)]
    _, c, score, _ = tune_svc([(None, Kc)], train.y, folds, grid, comp)
    return c, score


def train_smkl(train: Dataset, specs=None, grid: GridConfig = GridConfig(), *,
               bank: BaseClassifierBank | None = None,
               success: SuccessRegressorBank | None = None,
               check_psd=True, psd_policy="abort") -> SmklModel:
    """Train the success-weighted combined-kernel SVM.

    The training Gram must pass ``min_eigenvalue >= -1e-6 n``. The
    pair-dependent normalizer can make it indefinite; ``psd_policy="abort"``
    raises :class:`NotPsdError` then, ``"warn"`` emits :class:`NotPsdWarning`
    and solves anyway (the SMO step clamps non-positive curvature), keeping
    the eigenvalue on the model.
    """
    if psd_policy not in PSD_POLICIES:
        raise ValueError(f"psd_policy must be one of {PSD_POLICIES}")
    if bank is None:
        bank = train_base_bank(train, specs or make_specs(train.manifest), grid)
    if success is None:
        labels = compute_success_labels(bank, train)
        success = fit_success_regressors(train, bank.specs, labels, grid)
    kernel = CombinedKernel(tuple(bank.kernels), success)
    W = success.predict(train.X)
    K = combine_grams(kernel.base_grams(train.X, train.X), W, W)
    n = len(train)
    lam = min_eigenvalue(K) if check_psd else float("nan")
    if check_psd and lam < -1e-6 * n:
        if psd_policy == "abort":
            raise NotPsdError(lam, n)
        warnings.warn(str(NotPsdError(lam, n)), NotPsdWarning, stacklevel=2)
    c, _ = _tune_fixed(K, train, grid)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        final = train_csvc(K, train.y, grid.train_config(c))
    final.kernel = kernel
    final.support_vectors = train.X[final.sv_indices]
    return SmklModel(bank, success, final, W[:, final.sv_indices], lam, psd_policy)


def predict_smkl(model: SmklModel, X):
    """Return (labels, scores); weights at X are evaluated once per call."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    svc = model.final_svc
    if svc.n_sv == 0:
        scores = np.full(len(X), svc.bias)
    else:
        K = model.kernel(X, svc.support_vectors, WB=model.sv_weights)
        scores = K @ svc.dual_coef + svc.bias
    return _label(scores)


def _label(scores):
    labels = np.where(scores >= 0, 1, -1)
    labels[np.abs(scores) < 1e-12] = 1
    return labels, scores


# -- baselines --------------------------------------------------------------


@dataclass
class FmklModel:
    bank: BaseClassifierBank
    beta: np.ndarray
    final_svc: SvcModel


def f_measure_weights(eta) -> np.ndarray:
    eta = np.asarray(eta, dtype=float)
    total = eta.sum()
    if total <= 0:
        return np.full(eta.size, 1.0 / eta.size)
    return eta / total


def train_fmkl(train: Dataset, specs=None, grid: GridConfig = GridConfig(), *,
               bank: BaseClassifierBank | None = None) -> FmklModel:
    if bank is None:
        bank = train_base_bank(train, specs or make_specs(train.manifest), grid)
    beta = f_measure_weights(bank.f_measures)
    kernel = WeightedSumKernel(tuple(bank.kernels), beta)
    K = kernel(train.X, train.X)
    c, _ = _tune_fixed(K, train, grid)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        final = train_csvc(K, train.y, grid.train_config(c))
    final.kernel = kernel
    final.support_vectors = train.X[final.sv_indices]
    return FmklModel(bank, beta, final)


def predict_fmkl(model: FmklModel, X):
    return predict_csvc(model.final_svc, np.atleast_2d(X))


@dataclass
class EnsembleModel:
    bank: BaseClassifierBank
    weights: np.ndarray

    @property
    def sv_fraction(self) -> float:
        return float(np.mean([m.sv_fraction for m in self.bank.models]))


def ensemble_from_bank(bank: BaseClassifierBank) -> EnsembleModel:
    return EnsembleModel(bank, np.asarray(bank.f_measures, dtype=float))


def predict_fec(model: EnsembleModel, X):
    """Weighted vote sum_s eta_s * sign(f_s(x)); ties go to +1."""
    votes = np.where(model.bank.decision_values(np.atleast_2d(X)) >= 0, 1.0, -1.0)
    return _label(model.weights @ votes)


def train_concat(train: Dataset, grid: GridConfig = GridConfig()) -> SvcModel:
    """Early fusion: one RBF C-SVC on the full concatenated row."""
    train.require_both_classes()
    folds = _folds(train, grid)
    D = train.X.shape[1]
    base = ViewKernel(KernelSpec("all", "rbf", UNTUNED_GAMMA), 0, D)
    comp = compress_rows(folds, train.y, train.X)
    grams = _spec_grams(base, train.X[comp.reps], grid.gamma_grid)
    gamma, c, _, _ = tune_svc(grams, train.y, folds, grid, comp)
    kernel = ViewKernel(KernelSpec("all", "rbf", gamma), 0, D)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        return train_csvc(kernel, train.y, grid.train_config(c), X=train.X)
