"""Cross-validated grid search over precomputed Gram matrices.

Folds are built over *original* rows: oversampled copies of one instance
always land in the same fold, so validation never sees a duplicate of a
training row.

Rows that agree on fold, target and kernel view are interchangeable, so the
search solves one weighted dual variable per distinct row instead of one per
copy (see :func:`compress_rows`). This is the same optimization problem and
is much smaller after oversampling or on low-cardinality feature groups.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .metrics import balanced_accuracy
from .solver import ConvergenceWarning, TrainConfig, train_csvc, train_epsilon_svr


def _pow2(lo, hi):
    return tuple(float(v) for v in 2.0 ** np.arange(lo, hi + 1, 2))


@dataclass(frozen=True)
class GridConfig:
    c_grid: tuple = field(default_factory=lambda: _pow2(-5, 15))
    gamma_grid: tuple = field(default_factory=lambda: _pow2(-15, 3))
    epsilon_grid: tuple = (0.01, 0.05, 0.1)
    folds: int = 3
    tol: float = 1e-3
    max_iter: int | None = None
    # iteration budget for the many cross-validation solves; the hard
    # large-C corners stop early on their best iterate
    cv_max_iter: int | None = 50_000
    seed: int = 0
    n_jobs: int = 1

    def train_config(self, c, epsilon=0.1, *, cv=False) -> TrainConfig:
        return TrainConfig(c=c, epsilon_tube=epsilon, tol=self.tol,
                           max_iter=self.cv_max_iter if cv else self.max_iter,
                           seed=self.seed)

    def with_seed(self, seed) -> "GridConfig":
        return replace(self, seed=seed)

    @classmethod
    def small(cls, **kw) -> "GridConfig":
        """A coarse grid for quick runs and tests."""
        kw.setdefault("c_grid", (0.25, 4.0, 64.0))
        kw.setdefault("gamma_grid", (0.25, 2.0, 16.0))
        kw.setdefault("epsilon_grid", (0.05, 0.1))
        return cls(**kw)


def group_folds(labels, groups, n_folds, seed, stratified=True) -> np.ndarray:
    """Fold id per row; rows sharing a group id share a fold."""
    labels = np.asarray(labels)
    groups = np.asarray(groups)
    uniq, first = np.unique(groups, return_index=True)
    rng = np.random.default_rng(seed)
    fold_of = {}
    strata = (1, -1) if stratified else (None,)
    for label in strata:
        members = uniq if label is None else uniq[labels[first] == label]
        members = rng.permutation(members)
        offset = len(fold_of) % n_folds
        for pos, g in enumerate(members):
            fold_of[g] = (pos + offset) % n_folds
    return np.array([fold_of[g] for g in groups])


@dataclass(frozen=True)
class Compression:
    """Distinct rows: ``reps`` are representatives, ``weights`` their
    multiplicities and ``inverse`` maps every row to its representative."""

    reps: np.ndarray
    weights: np.ndarray
    inverse: np.ndarray

    @classmethod
    def identity(cls, n):
        ids = np.arange(n)
        return cls(ids, np.ones(n), ids)


def compress_rows(*columns) -> Compression:
    """Group rows equal in every given column (1-D or 2-D arrays)."""
    parts = [np.asarray(c, dtype=float).reshape(len(c), -1) for c in columns]
    key = np.hstack(parts)
    _, first, inverse, counts = np.unique(
        key, axis=0, return_index=True, return_inverse=True, return_counts=True
    )
    # order representatives by first appearance for stable output
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    return Compression(first[order], counts[order].astype(float), rank[inverse.ravel()])


def _c_path(cfgs):
    """Indices of ``cfgs`` by ascending C: a solution at a smaller C is a
    feasible warm start for a larger one."""
    return sorted(range(len(cfgs)), key=lambda i: cfgs[i].c)


def _fold_slices(folds):
    for f in np.unique(folds):
        yield np.flatnonzero(folds == f), np.flatnonzero(folds != f)


def cv_svc_path(K, y, folds, cfgs, weights=None) -> list:
    """Out-of-fold labels for each config in ``cfgs`` (one array per config).

    Within a fold the configs are solved in order of increasing C, each
    warm-started from the previous solution.
    """
    y = np.asarray(y)
    w = np.ones(y.size) if weights is None else np.asarray(weights, dtype=float)
    preds = [np.empty(y.size, dtype=np.int64) for _ in cfgs]
    for te, tr in _fold_slices(folds):
        Ktr = K[np.ix_(tr, tr)]
        alpha = None
        for i in _c_path(cfgs):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ConvergenceWarning)
                model = train_csvc(Ktr, y[tr], cfgs[i], weights=w[tr], alpha0=alpha)
            alpha = model.alpha
            scores = model.decision_function(K=K[np.ix_(te, tr[model.sv_indices])])
            preds[i][te] = np.where(scores >= 0, 1, -1)
    return preds


def cv_svc_predictions(K, y, folds, cfg: TrainConfig, weights=None):
    """Out-of-fold labels from C-SVCs trained on the fold complements."""
    return cv_svc_path(K, y, folds, [cfg], weights)[0]


def cv_svr_path(K, z, folds, cfgs, weights=None) -> list:
    """Weighted out-of-fold MSE of the clamped prediction, per config.

    Configs sharing an epsilon form one warm-started path over C.
    """
    z = np.asarray(z, dtype=float)
    w = np.ones(z.size) if weights is None else np.asarray(weights, dtype=float)
    errs = [np.empty(z.size) for _ in cfgs]
    for te, tr in _fold_slices(folds):
        Ktr = K[np.ix_(tr, tr)]
        for eps in sorted({c.epsilon_tube for c in cfgs}):
            alpha = None
            for i in _c_path(cfgs):
                if cfgs[i].epsilon_tube != eps:
                    continue
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", ConvergenceWarning)
                    model = train_epsilon_svr(Ktr, z[tr], cfgs[i], weights=w[tr], alpha0=alpha)
                alpha = model.alpha
                pred = model.decision_function(K=K[np.ix_(te, tr[model.sv_indices])])
                errs[i][te] = np.clip(pred, 0.0, 1.0) - z[te]
    return [float(np.sum(w * e**2) / w.sum()) for e in errs]


def cv_svr_mse(K, z, folds, cfg: TrainConfig, weights=None) -> float:
    return cv_svr_path(K, z, folds, [cfg], weights)[0]


def tune_svc(grams, y, folds, grid: GridConfig, comp: Compression | None = None):
    """Pick (key, C) maximizing out-of-fold balanced accuracy.

    ``grams`` yields (key, training Gram) pairs, key being e.g. gamma; a
    generator keeps only one Gram alive at a time. With ``comp`` the Grams
    cover the representative rows only, while ``y`` and ``folds`` cover
    every row. Ties keep the earliest grid point. Returns
    (key, C, score, oof_predictions).
    """
    y = np.asarray(y)
    folds = np.asarray(folds)
    comp = comp or Compression.identity(y.size)
    yc, fc = y[comp.reps], folds[comp.reps]
    cfgs = [grid.train_config(c, cv=True) for c in grid.c_grid]
    best = None
    for key, K in grams:
        path = cv_svc_path(K, yc, fc, cfgs, comp.weights)
        for c, pred_c in zip(grid.c_grid, path):
            pred = pred_c[comp.inverse]
            score = balanced_accuracy(pred, y)
            if best is None or score > best[2]:
                best = (key, c, score, pred)
    return best


def tune_svr(grams, z, folds, grid: GridConfig, comp: Compression | None = None):
    """Pick (key, C, epsilon) minimizing out-of-fold MSE of clamped output."""
    z = np.asarray(z, dtype=float)
    folds = np.asarray(folds)
    comp = comp or Compression.identity(z.size)
    zc, fc = z[comp.reps], folds[comp.reps]
    points = [(c, eps) for c in grid.c_grid for eps in grid.epsilon_grid]
    cfgs = [grid.train_config(c, eps, cv=True) for c, eps in points]
    best = None
    for key, K in grams:
        # representative rows carry their multiplicity, so this is the
        # MSE over all rows
        for (c, eps), mse in zip(points, cv_svr_path(K, zc, fc, cfgs, comp.weights)):
            if best is None or mse < best[3]:
                best = (key, c, eps, mse)
    return best
