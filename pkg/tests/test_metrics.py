import numpy as np
import pytest

from flowid.metrics import confusion_matrix, f1_macro


def oracle_f1(predictions, labels, n_classes):
    # explicit counting, no shared code with the implementation
    scores = []
    for c in range(n_classes):
        tp = sum(1 for p, t in zip(predictions, labels) if p == c and t == c)
        fp = sum(1 for p, t in zip(predictions, labels) if p == c and t != c)
        fn = sum(1 for p, t in zip(predictions, labels) if p != c and t == c)
        if tp + fn == 0:
            continue  # class absent from labels
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn)
        scores.append(0.0 if precision + recall == 0 else
                      2 * precision * recall / (precision + recall))
    return sum(scores) / len(scores)


def test_perfect_predictions():
    assert f1_macro([0, 1, 2, 1], [0, 1, 2, 1]) == 1.0


def test_binary_half_precision_full_recall():
    # positive class: precision 0.5, recall 1.0 -> F1 = 2 * 0.5 / 1.5 = 2/3
    labels = [1, 0, 0, 0]
    preds = [1, 1, 0, 0]
    cm = confusion_matrix(preds, labels, 2)
    tp, fp, fn = cm[1, 1], cm[0, 1], cm[1, 0]
    precision, recall = tp / (tp + fp), tp / (tp + fn)
    assert 2 * precision * recall / (precision + recall) == pytest.approx(2 / 3)
    # negative class scores 0.8, so the macro mean is (2/3 + 0.8) / 2
    assert f1_macro(preds, labels, 2) == pytest.approx((2 / 3 + 0.8) / 2)
    assert f1_macro(preds, labels, 2) == pytest.approx(oracle_f1(preds, labels, 2))


def test_zero_denominator_class_scores_zero():
    # class 1 never predicted and never correct -> P + R = 0 -> F1 term 0
    assert f1_macro([0, 0], [1, 1], 2) == 0.0


def test_macro_averages_only_classes_present_in_labels():
    # class 2 appears only in predictions; macro mean is over classes {0, 1}
    preds = [2, 1]
    labels = [0, 1]
    assert f1_macro(preds, labels, 3) == pytest.approx(0.5)


def test_randomized_equivalence_with_counting_oracle():
    rng = np.random.Generator(np.random.PCG64(17))
    for _ in range(300):
        n_classes = int(rng.integers(2, 9))
        n = int(rng.integers(1, 120))
        labels = rng.integers(0, n_classes, n)
        preds = rng.integers(0, n_classes, n)
        assert f1_macro(preds, labels, n_classes) == pytest.approx(
            oracle_f1(preds.tolist(), labels.tolist(), n_classes), abs=1e-12)


def test_empty_and_mismatched_inputs():
    with pytest.raises(ValueError):
        f1_macro([], [])
    with pytest.raises(ValueError):
        f1_macro([0, 1], [0])
