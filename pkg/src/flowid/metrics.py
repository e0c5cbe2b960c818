"""Classification metrics.

Macro F1 is the unweighted mean over classes of 2PR/(P+R), computed for
the classes that actually occur in the true labels. A class with
precision + recall = 0 contributes an F1 of 0.
"""

import numpy as np


def confusion_matrix(predictions, labels, n_classes: int) -> np.ndarray:
    """Counts[i, j] = rows with true class i predicted as class j."""
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (labels, predictions), 1)
    return counts


def f1_macro(predictions, labels, n_classes: int = None) -> float:
    """Macro-averaged F1 over the classes present in `labels`."""
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ValueError("empty input")
    if predictions.shape != labels.shape:
        raise ValueError("predictions and labels differ in length")
    if n_classes is None:
        n_classes = int(max(predictions.max(), labels.max())) + 1
    cm = confusion_matrix(predictions, labels, n_classes)
    true_pos = np.diag(cm).astype(np.float64)
    pred_count = cm.sum(axis=0).astype(np.float64)
    label_count = cm.sum(axis=1).astype(np.float64)
    scores = []
    for c in range(n_classes):
        if label_count[c] == 0:
            continue
        precision = true_pos[c] / pred_count[c] if pred_count[c] > 0 else 0.0
        recall = true_pos[c] / label_count[c]
        if precision + recall == 0.0:
            scores.append(0.0)
        else:
            scores.append(2.0 * precision * recall / (precision + recall))
    return float(np.mean(scores))
