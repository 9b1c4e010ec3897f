import numpy as np
import pytest

from surgraph.errors import EmptyEvalSet, LabelOutOfRange
from surgraph.metrics import compute_metrics, confusion_matrix, metrics_from_confusion


def test_all_correct():
    m = compute_metrics([0, 1, 2, 1], [0, 1, 2, 1], num_classes=3)
    assert m.accuracy == 1.0
    assert m.macro_f1 == 1.0


def test_constant_predictor_half_right():
    truth = [0] * 5 + [1] * 5
    preds = [0] * 10
    m = compute_metrics(truth, preds, num_classes=2)
    assert m.accuracy == 0.5
    assert m.per_class[0].precision == 0.5
    assert m.per_class[0].recall == 1.0
    assert m.per_class[0].f1 == pytest.approx(2.0 / 3.0)
    assert m.per_class[1].f1 == 0.0
    assert m.macro_f1 == pytest.approx(1.0 / 3.0)


def test_single_sample():
    m = compute_metrics([3], [3], num_classes=5)
    assert m.accuracy == 1.0
    # only class 3 has support, so macro averages over that one class
    assert m.macro_f1 == 1.0


def test_accuracy_is_trace_over_total():
    rng = np.random.default_rng(0)
    truth = rng.integers(0, 6, size=200)
    preds = rng.integers(0, 6, size=200)
    conf = confusion_matrix(truth, preds, num_classes=6)
    m = metrics_from_confusion(conf)
    assert m.accuracy == pytest.approx(np.trace(conf) / conf.sum())


def test_unsupported_classes_excluded_from_macro():
    # class 2 never appears in the truth; macro must ignore it
    m = compute_metrics([0, 1], [0, 1], num_classes=3)
    assert m.macro_f1 == 1.0


def test_relabeling_permutation_invariance():
    rng = np.random.default_rng(1)
    truth = rng.integers(0, 4, size=300)
    preds = rng.integers(0, 4, size=300)
    base = compute_metrics(truth, preds, num_classes=4)
    perm = np.array([2, 0, 3, 1])
    remapped = compute_metrics(perm[truth], perm[preds], num_classes=4)
    assert remapped.accuracy == pytest.approx(base.accuracy)
    assert remapped.macro_f1 == pytest.approx(base.macro_f1)


def test_micro_f1_equals_accuracy():
    rng = np.random.default_rng(2)
    truth = rng.integers(0, 5, size=100)
    preds = rng.integers(0, 5, size=100)
    m = compute_metrics(truth, preds, num_classes=5)
    assert m.micro_f1 == m.accuracy


def test_confusion_layout():
    conf = confusion_matrix([0, 0, 1], [1, 0, 1], num_classes=2)
    np.testing.assert_array_equal(conf, [[1, 1], [0, 1]])


def test_empty_eval_set():
    with pytest.raises(EmptyEvalSet):
        compute_metrics([], [], num_classes=2)


def test_label_out_of_range():
    with pytest.raises(LabelOutOfRange):
        compute_metrics([0, 5], [0, 1], num_classes=2)
    with pytest.raises(LabelOutOfRange):
        compute_metrics([0, 1], [0, -1], num_classes=2)


def test_length_mismatch():
    with pytest.raises(ValueError):
        compute_metrics([0, 1], [0], num_classes=2)
