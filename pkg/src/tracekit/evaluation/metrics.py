"""Binary classification metrics.

AU-ROC uses the rank-statistic form of the Mann-Whitney U: with R the sum of
average ranks of the positive scores,

    AUC = (R - P(P+1)/2) / (P * N)

which equals the probability that a random positive outscores a random
negative, counting exact ties as one half.
"""

from __future__ import annotations

from typing import Sequence

__all__ = [
    "confusion_counts",
    "binary_f1",
    "accuracy",
    "precision",
    "recall",
    "auroc",
]


def _check_binary(values: Sequence[int], name: str) -> None:
    for v in values:
        if v not in (0, 1):
            raise ValueError(f"{name} must be binary 0/1, got {v!r}")


def confusion_counts(
    predictions: Sequence[int], labels: Sequence[int]
) -> tuple[int, int, int, int]:
    """(tp, fp, fn, tn) for hard binary predictions."""
    if len(predictions) != len(labels):
        raise ValueError("predictions and labels must have equal length")
    _check_binary(predictions, "predictions")
    _check_binary(labels, "labels")
    tp = fp = fn = tn = 0
    for p, y in zip(predictions, labels):
        if p == 1 and y == 1:
            tp += 1
        elif p == 1 and y == 0:
            fp += 1
        elif p == 0 and y == 1:
            fn += 1
        else:
            tn += 1
    return tp, fp, fn, tn


def binary_f1(predictions: Sequence[int], labels: Sequence[int]) -> float:
    """F1 of the positive class: 2TP / (2TP + FP + FN); 0 when the denominator is 0."""
    tp, fp, fn, _ = confusion_counts(predictions, labels)
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def accuracy(predictions: Sequence[int], labels: Sequence[int]) -> float:
    tp, fp, fn, tn = confusion_counts(predictions, labels)
    return (tp + tn) / (tp + fp + fn + tn)


def precision(predictions: Sequence[int], labels: Sequence[int]) -> float:
    tp, fp, _, _ = confusion_counts(predictions, labels)
    return tp / (tp + fp) if (tp + fp) else 0.0


def recall(predictions: Sequence[int], labels: Sequence[int]) -> float:
    tp, _, fn, _ = confusion_counts(predictions, labels)
    return tp / (tp + fn) if (tp + fn) else 0.0


def auroc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Area under the ROC curve from real-valued scores.

    Ties contribute one half. Raises when only one class is present, since
    the quantity is undefined there.
    """
    if len(scores) != len(labels):
        raise ValueError("scores and labels must have equal length")
    _check_binary(labels, "labels")
    n_pos = sum(labels)
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("auroc undefined: need both classes present")

    order = sorted(range(len(scores)), key=lambda i: scores[i])
    ranks = [0.0] * len(scores)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        avg_rank = (i + j) / 2 + 1  # 1-based average rank of the tie group
        for k in range(i, j + 1):
            ranks[order[k]] = avg_rank
        i = j + 1

    rank_sum_pos = sum(r for r, y in zip(ranks, labels) if y == 1)
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg)
