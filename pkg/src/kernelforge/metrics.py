"""Per-class precision / recall / F-measure and balanced accuracy."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f_measure: float
    # False when the quantity had a zero denominator and was reported as 0
    precision_defined: bool = True
    recall_defined: bool = True


@dataclass(frozen=True)
class ClassReport:
    positive: ClassMetrics
    negative: ClassMetrics
    sv_fraction: float
    tp: int
    fp: int
    tn: int
    fn: int

    def for_class(self, label: int) -> ClassMetrics:
        return self.positive if label == 1 else self.negative

    def to_json(self) -> dict:
        return asdict(self)


def _metrics(tp, fp, fn) -> ClassMetrics:
    p_def = tp + fp > 0
    r_def = tp + fn > 0
    p = tp / (tp + fp) if p_def else 0.0
    r = tp / (tp + fn) if r_def else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return ClassMetrics(p, r, f, p_def, r_def)


def _check(preds, truth):
    preds = np.asarray(preds).ravel()
    truth = np.asarray(truth).ravel()
    if preds.shape != truth.shape:
        raise ValueError(f"length mismatch: {preds.size} predictions, {truth.size} labels")
    return preds, truth


def class_report(preds, truth, n_sv: int = 0, n_train: int = 1) -> ClassReport:
    preds, truth = _check(preds, truth)
    if n_train <= 0:
        raise ValueError("n_train must be positive")
    tp = int(np.sum((preds == 1) & (truth == 1)))
    fp = int(np.sum((preds == 1) & (truth == -1)))
    tn = int(np.sum((preds == -1) & (truth == -1)))
    fn = int(np.sum((preds == -1) & (truth == 1)))
    return ClassReport(
        positive=_metrics(tp, fp, fn),
        negative=_metrics(tn, fn, fp),
        sv_fraction=n_sv / n_train,
        tp=tp, fp=fp, tn=tn, fn=fn,
    )


def f_measure(preds, truth, label: int = 1) -> float:
    preds, truth = _check(preds, truth)
    tp = np.sum((preds == label) & (truth == label))
    fp = np.sum((preds == label) & (truth != label))
    fn = np.sum((preds != label) & (truth == label))
    return _metrics(int(tp), int(fp), int(fn)).f_measure


def balanced_accuracy(preds, truth) -> float:
    """Mean of the per-class recalls."""
    preds, truth = _check(preds, truth)
    recalls = []
    for label in (1, -1):
        mask = truth == label
        if not mask.any():
            raise ValueError("balanced accuracy needs both classes in truth")
        recalls.append(np.mean(preds[mask] == label))
    return float(np.mean(recalls))
