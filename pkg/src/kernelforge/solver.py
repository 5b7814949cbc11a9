"""SMO training for C-SVC and epsilon-SVR on precomputed Gram matrices.

Models keep the dual form only: support-vector indices into the training
set, their dual coefficients and a bias. When a model is trained through a
kernel callable the support-vector rows and the callable are kept as well,
so the model can score new rows on its own.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _smo

KernelFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


class ConvergenceWarning(UserWarning):
    """SMO stopped at max_iter before the KKT gap dropped below tol."""


@dataclass(frozen=True)
class TrainConfig:
    c: float = 1.0
    epsilon_tube: float = 0.1
    tol: float = 1e-3
    max_iter: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"c must be positive, got {self.c}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if not self.epsilon_tube >= 0:
            raise ValueError(f"epsilon_tube must be >= 0, got {self.epsilon_tube}")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError("max_iter must be positive")

    def iteration_cap(self, n: int) -> int:
        if self.max_iter is not None:
            return int(self.max_iter)
        return int(min(max(10 * n * n, 100_000), 10**7))


@dataclass
class _DualModel:
    sv_indices: np.ndarray
    dual_coef: np.ndarray
    bias: float
    c: float
    n_train: int
    dual_objective: float = float("nan")
    kkt_gap: float = 0.0
    n_iter: int = 0
    converged: bool = True
    kernel: Optional[KernelFn] = field(default=None, repr=False)
    support_vectors: Optional[np.ndarray] = field(default=None, repr=False)
    # training rows behind each support vector when duplicates were merged
    sv_counts: Optional[np.ndarray] = field(default=None, repr=False)
    # raw dual variables of the solved problem (warm starts)
    alpha: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def n_sv(self) -> int:
        if self.sv_counts is not None:
            return int(round(float(np.sum(self.sv_counts))))
        return int(self.sv_indices.size)

    @property
    def sv_fraction(self) -> float:
        return self.n_sv / self.n_train

    def decision_function(self, X=None, *, K=None) -> np.ndarray:
        """Decision values for rows ``X`` or a cross Gram ``K``.

        ``K`` has shape (n_samples, n_sv) or (n_samples, n_train); the
        latter is reduced to the support-vector columns.
        """
        if K is None:
            if X is None:
                raise ValueError("pass rows X or a cross Gram K")
            if self.sv_indices.size == 0:
                return np.full(len(X), self.bias)
            if self.kernel is None or self.support_vectors is None:
                raise ValueError("model has no kernel; pass a cross Gram K")
            K = self.kernel(np.asarray(X, dtype=float), self.support_vectors)
        K = np.asarray(K, dtype=float)
        if K.ndim == 1:
            K = K[None, :]
        n_sv = self.sv_indices.size
        if K.shape[1] == self.n_train and K.shape[1] != n_sv:
            K = K[:, self.sv_indices]
        if n_sv == 0:
            return np.full(K.shape[0], self.bias)
        return K @ self.dual_coef + self.bias


@dataclass
class SvcModel(_DualModel):
    """Soft-margin classifier; ``dual_coef`` holds alpha_i * y_i."""


@dataclass
class SvrModel(_DualModel):
    """Epsilon-insensitive regressor; ``dual_coef`` holds alpha_i - alpha*_i."""

    epsilon: float = 0.0


def constant_svr(value: float, n_train: int, c: float = 1.0) -> SvrModel:
    """A regressor with no support vectors predicting ``value`` everywhere."""
    return SvrModel(
        sv_indices=np.empty(0, dtype=np.int64),
        dual_coef=np.empty(0),
        bias=float(value),
        c=c,
        n_train=n_train,
        dual_objective=0.0,
        support_vectors=None,
    )


def _materialize(kernel, X):
    if callable(kernel):
        if X is None:
            raise ValueError("a kernel callable needs the training rows X")
        X = np.asarray(X, dtype=float)
        return np.asarray(kernel(X, X), dtype=float), X
    K = np.asarray(kernel, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValueError(f"training Gram must be square, got shape {K.shape}")
    return K, (None if X is None else np.asarray(X, dtype=float))


def _bounds(cfg, weights, n):
    if weights is None:
        return np.full(n, float(cfg.c))
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (n,) or np.any(w <= 0):
        raise ValueError("weights must be one positive value per instance")
    return cfg.c * w


def _start(alpha0, y, upper):
    if alpha0 is None:
        return np.zeros(y.size)
    a = np.asarray(alpha0, dtype=np.float64)
    if a.shape != y.shape:
        raise ValueError(f"alpha0 must have shape {y.shape}")
    if np.any(a < 0) or np.any(a > upper) or abs(float(a @ y)) > 1e-9 * (1 + upper.sum()):
        raise ValueError("alpha0 is not feasible for this problem")
    return a


def _run(K, idx, y, p, cfg, n, record, upper, alpha0=None):
    K = np.ascontiguousarray(K, dtype=np.float64)
    alpha, G, n_iter, converged, history = _smo.solve(
        K, idx, y, p, upper, float(cfg.tol), cfg.iteration_cap(n), record,
        _start(alpha0, y, upper),
    )
    if not converged:
        warnings.warn(
            f"SMO hit max_iter={cfg.iteration_cap(n)} before reaching tol={cfg.tol}",
            ConvergenceWarning,
            stacklevel=3,
        )
    rho = _smo.bias_terms(alpha, G, y, upper)
    gap = _smo.kkt_gap(alpha, G, y, upper)
    objective = -0.5 * float(alpha @ (G + p))
    return alpha, rho, gap, objective, n_iter, bool(converged), history


def train_csvc(kernel, labels, cfg: TrainConfig = TrainConfig(), X=None, *,
               weights=None, alpha0=None, record=False):
    """Train a C-SVC.

    ``kernel`` is either a precomputed n x n training Gram or a callable
    ``kernel(A, B)`` evaluated on the training rows ``X``. ``weights``
    scales the box bound per instance (C * w_i); an instance of weight m
    is equivalent to m identical copies. ``alpha0`` warm-starts SMO from
    a feasible point, typically ``model.alpha`` of a fit with a smaller C.
    With ``record=True`` the per-iteration dual objective is attached as
    ``model.history``.
    """
    K, X = _materialize(kernel, X)
    y = np.asarray(labels, dtype=np.float64)
    n = y.size
    if K.shape[0] != n:
        raise ValueError(f"Gram has {K.shape[0]} rows but {n} labels were given")
    if not np.all(np.abs(y) == 1):
        raise ValueError("labels must be -1 or +1")
    if np.unique(y).size < 2:
        raise ValueError("C-SVC training needs both classes")
    idx = np.arange(n, dtype=np.int64)
    p = -np.ones(n)
    upper = _bounds(cfg, weights, n)
    alpha, rho, gap, obj, n_iter, converged, history = _run(
        K, idx, y, p, cfg, n, record, upper, alpha0)
    sv = np.flatnonzero(alpha > 0)
    model = SvcModel(
        sv_indices=sv,
        dual_coef=alpha[sv] * y[sv],
        bias=-rho,
        c=cfg.c,
        n_train=n,
        dual_objective=obj,
        kkt_gap=gap,
        n_iter=int(n_iter),
        converged=converged,
        kernel=kernel if callable(kernel) else None,
        support_vectors=None if X is None else X[sv],
        alpha=alpha,
    )
    if record:
        model.history = history
    return model


def predict_csvc(model: SvcModel, X=None, *, K=None):
    """Return (labels, scores); a score of exactly zero maps to +1."""
    scores = model.decision_function(X, K=K)
    labels = np.where(scores >= 0, 1, -1)
    # |score| < 1e-12 counts as a tie
    labels[np.abs(scores) < 1e-12] = 1
    return labels, scores


def train_epsilon_svr(kernel, targets, cfg: TrainConfig = TrainConfig(), X=None, *,
                      weights=None, alpha0=None, record=False):
    """Train an epsilon-SVR with tube half-width ``cfg.epsilon_tube``.

    ``weights`` and ``alpha0`` have the same meaning as in
    :func:`train_csvc`; here ``alpha0`` holds the 2n variables
    (alpha, alpha*). The feasible set does not depend on epsilon.
    """
    K, X = _materialize(kernel, X)
    z = np.asarray(targets, dtype=np.float64)
    n = z.size
    if n < 2:
        raise ValueError("SVR training needs at least 2 instances")
    if K.shape[0] != n:
        raise ValueError(f"Gram has {K.shape[0]} rows but {n} targets were given")
    idx = np.concatenate([np.arange(n), np.arange(n)]).astype(np.int64)
    y = np.concatenate([np.ones(n), -np.ones(n)])
    eps = cfg.epsilon_tube
    p = np.concatenate([eps - z, eps + z])
    w = _bounds(cfg, weights, n)
    upper = np.concatenate([w, w])
    alpha, rho, gap, obj, n_iter, converged, history = _run(
        K, idx, y, p, cfg, n, record, upper, alpha0)
    coef = alpha[:n] - alpha[n:]
    sv = np.flatnonzero(coef != 0)
    model = SvrModel(
        sv_indices=sv,
        dual_coef=coef[sv],
        bias=-rho,
        c=cfg.c,
        n_train=n,
        dual_objective=obj,
        kkt_gap=gap,
        n_iter=int(n_iter),
        converged=converged,
        kernel=kernel if callable(kernel) else None,
        support_vectors=None if X is None else X[sv],
        epsilon=eps,
        alpha=alpha,
    )
    if record:
        model.history = history
    return model


def predict_svr(model: SvrModel, X=None, *, K=None) -> np.ndarray:
    return model.decision_function(X, K=K)


def expand_compressed(model: _DualModel, comp) -> _DualModel:
    """Re-index a model trained on ``comp.reps`` to the full training set.

    Support vectors point at their representative rows and ``sv_counts``
    records how many rows each one stands for.
    """
    local = model.sv_indices
    model.sv_indices = np.asarray(comp.reps)[local]
    model.sv_counts = np.asarray(comp.weights)[local]
    model.n_train = int(np.asarray(comp.inverse).size)
    return model


def full_coefficients(model: _DualModel, comp=None) -> np.ndarray:
    """Dual coefficients scattered back over all training instances.

    For a model trained on compressed rows, pass the same ``comp`` to spread
    each merged coefficient evenly over the rows it stands for; the result
    is then a solution of the uncompressed problem.
    """
    beta = np.zeros(model.n_train)
    beta[model.sv_indices] = model.dual_coef
    if comp is None:
        return beta
    inverse = np.asarray(comp.inverse)
    return beta[np.asarray(comp.reps)[inverse]] / np.asarray(comp.weights)[inverse]


def csvc_dual_objective(K, labels, coef) -> float:
    """sum(alpha) - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij with coef = alpha * y."""
    K = np.asarray(K, dtype=float)
    y = np.asarray(labels, dtype=float)
    coef = np.asarray(coef, dtype=float)
    return float(np.sum(coef * y) - 0.5 * coef @ K @ coef)


def svr_dual_objective(K, targets, coef, alpha_sum, epsilon) -> float:
    """-1/2 b^T K b - eps * sum(a + a*) + z^T b with b = a - a*."""
    K = np.asarray(K, dtype=float)
    z = np.asarray(targets, dtype=float)
    coef = np.asarray(coef, dtype=float)
    return float(-0.5 * coef @ K @ coef - epsilon * alpha_sum + z @ coef)


def csvc_kkt_violation(K, labels, model: SvcModel, weights=None, comp=None) -> float:
    """Recompute the gradient from scratch and return the KKT gap.

    ``weights`` audits a weighted problem as solved; ``comp`` audits an
    expanded model against the full, unweighted problem.
    """
    y = np.asarray(labels, dtype=float)
    alpha = full_coefficients(model, comp) * y
    idx = np.arange(y.size, dtype=np.int64)
    G = _smo.gradient(np.ascontiguousarray(K, dtype=float), idx, y, -np.ones(y.size), alpha)
    upper = model.c if weights is None else model.c * np.asarray(weights, dtype=float)
    return _smo.kkt_gap(alpha, G, y, upper)


def svr_kkt_violation(K, targets, model: SvrModel, weights=None, comp=None) -> float:
    z = np.asarray(targets, dtype=float)
    n = z.size
    beta = full_coefficients(model, comp)
    # a and a* are never both positive at an optimum of the split problem
    alpha = np.concatenate([np.maximum(beta, 0), np.maximum(-beta, 0)])
    idx = np.concatenate([np.arange(n), np.arange(n)]).astype(np.int64)
    y = np.concatenate([np.ones(n), -np.ones(n)])
    p = np.concatenate([model.epsilon - z, model.epsilon + z])
    G = _smo.gradient(np.ascontiguousarray(K, dtype=float), idx, y, p, alpha)
    upper = model.c if weights is None else model.c * np.tile(np.asarray(weights, dtype=float), 2)
    return _smo.kkt_gap(alpha, G, y, upper)
