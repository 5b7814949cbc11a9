import numpy as np
import pytest
from hypothesis import given, strategies as st

from kernelforge.metrics import balanced_accuracy, class_report


def test_perfect_predictions():
    y = [1, -1, 1, -1]
    r = class_report(y, y, n_sv=2, n_train=8)
    for side in (r.positive, r.negative):
        assert (side.precision, side.recall, side.f_measure) == (1.0, 1.0, 1.0)
    assert r.sv_fraction == 0.25


def test_constant_positive_predictor():
    truth = [1, 1, -1, -1]
    r = class_report([1, 1, 1, 1], truth)
    assert r.positive.precision == 0.5
    assert r.positive.recall == 1.0
    assert r.positive.f_measure == pytest.approx(2 / 3)
    assert r.negative.precision == 0.0
    assert not r.negative.precision_defined
    assert r.tp + r.fp + r.tn + r.fn == 4


def test_tp3_fp1_fn1():
    preds = [1, 1, 1, 1, -1]
    truth = [1, 1, 1, -1, 1]
    r = class_report(preds, truth)
    assert (r.positive.precision, r.positive.recall, r.positive.f_measure) == (0.75, 0.75, 0.75)


def test_length_mismatch():
    with pytest.raises(ValueError):
        class_report([1], [1, -1])


def test_balanced_accuracy_examples():
    assert balanced_accuracy([1, -1], [1, -1]) == 1.0
    assert balanced_accuracy([1, 1, 1, 1], [1, -1, -1, 1]) == 0.5
    truth = [1] * 5 + [-1] * 5
    preds = [1, 1, 1, 1, -1] + [-1, -1, -1, 1, 1]
    assert balanced_accuracy(preds, truth) == pytest.approx(0.7)


labels = st.lists(st.sampled_from([-1, 1]), min_size=1, max_size=60)


@given(labels, st.integers(0, 10**6))
def test_f_measure_bounds(truth, seed):
    preds = np.random.default_rng(seed).choice([-1, 1], len(truth))
    r = class_report(preds, truth)
    for side in (r.positive, r.negative):
        assert 0 <= side.f_measure <= 1
        assert side.f_measure <= 2 * min(side.precision, side.recall) + 1e-12


@given(labels, st.integers(0, 10**6))
def test_label_swap_symmetry(truth, seed):
    truth = np.array(truth)
    preds = np.random.default_rng(seed).choice([-1, 1], truth.size)
    a = class_report(preds, truth)
    b = class_report(-preds, -truth)
    assert a.positive == b.negative
    assert a.negative == b.positive
