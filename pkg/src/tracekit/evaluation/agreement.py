"""Inter-annotator agreement statistics for binary annotation campaigns.

Krippendorff's alpha (nominal level) is computed from the coincidence matrix
over all pairable values, i.e. items annotated by at least two people:

    o[c][k] = sum over items u of (pairs of values c,k in u) / (m_u - 1)
    D_o = off-diagonal mass of o / n
    D_e = sum_{c != k} n_c * n_k / (n * (n - 1))
    alpha = 1 - D_o / D_e
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

from tracekit.evaluation.metrics import binary_f1

__all__ = [
    "AnnotationSet",
    "krippendorff_alpha",
    "majority_vote",
    "expert_agreement",
    "cohens_kappa",
]


@dataclass(frozen=True)
class AnnotationSet:
    """Votes of several annotators over a shared item set.

    ``votes[i][a]`` is annotator a's label for item i, or None where that
    annotator skipped the item.
    """

    item_ids: tuple[str, ...]
    annotator_ids: tuple[str, ...]
    votes: tuple[tuple[int | None, ...], ...]

    def __post_init__(self) -> None:
        if len(self.annotator_ids) < 2:
            raise ValueError("need at least two annotators")
        if len(self.votes) != len(self.item_ids):
            raise ValueError("votes and item_ids length mismatch")
        for item_id, row in zip(self.item_ids, self.votes):
            if len(row) != len(self.annotator_ids):
                raise ValueError(f"item {item_id!r}: vote row length mismatch")
            if all(v is None for v in row):
                raise ValueError(f"item {item_id!r} has no votes")
            for v in row:
                if v is not None and v not in (0, 1):
                    raise ValueError(f"item {item_id!r}: labels must be 0/1")

    @staticmethod
    def from_csv(path: str) -> "AnnotationSet":
        """Read long-form CSV with columns item_id, annotator_id, label."""
        cells: dict[tuple[str, str], int] = {}
        items: list[str] = []
        annotators: list[str] = []
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            required = {"item_id", "annotator_id", "label"}
            if reader.fieldnames is None or not required <= set(reader.fieldnames):
                raise ValueError(f"{path}: need columns item_id, annotator_id, label")
            for lineno, row in enumerate(reader, start=2):
                try:
                    label = int(row["label"])
                except (TypeError, ValueError) as exc:
                    raise ValueError(f"{path}: bad label at line {lineno}") from exc
                item, annotator = row["item_id"], row["annotator_id"]
                if (item, annotator) in cells:
                    raise ValueError(f"{path}: duplicate vote at line {lineno}")
                cells[(item, annotator)] = label
                if item not in items:
                    items.append(item)
                if annotator not in annotators:
                    annotators.append(annotator)
        votes = tuple(
            tuple(cells.get((item, annotator)) for annotator in annotators) for item in items
        )
        return AnnotationSet(tuple(items), tuple(annotators), votes)


def krippendorff_alpha(annotations: AnnotationSet) -> float:
    """Nominal-level alpha over the pairable values; 1 is perfect agreement."""
    o = [[0.0, 0.0], [0.0, 0.0]]
    for row in annotations.votes:
        values = [v for v in row if v is not None]
        m = len(values)
        if m < 2:
            continue
        for a in range(m):
            for b in range(m):
                if a != b:
                    o[values[a]][values[b]] += 1.0 / (m - 1)
    n_c = [o[0][0] + o[0][1], o[1][0] + o[1][1]]
    n = n_c[0] + n_c[1]
    if n < 2:
        raise ValueError("alpha undefined: no pairable values")
    d_o = (o[0][1] + o[1][0]) / n
    d_e = 2 * n_c[0] * n_c[1] / (n * (n - 1))
    if d_e == 0.0:
        raise ValueError("alpha undefined: no label variation among pairable values")
    return 1.0 - d_o / d_e


def majority_vote(annotations: AnnotationSet) -> tuple[list[int], list[bool]]:
    """Per-item strict majority of the non-missing votes.

    Exact ties resolve to 0 and are flagged in the second return value.
    """
    labels: list[int] = []
    ties: list[bool] = []
    for row in annotations.votes:
        values = [v for v in row if v is not None]
        n_pos = sum(values)
        n_neg = len(values) - n_pos
        if n_pos == n_neg:
            labels.append(0)
            ties.append(True)
        else:
            labels.append(1 if n_pos > n_neg else 0)
            ties.append(False)
    return labels, ties


def expert_agreement(majority_labels: Sequence[int], expert_labels: Sequence[int]) -> float:
    """Binary F1 of the majority labels against an expert reference."""
    if len(majority_labels) != len(expert_labels):
        raise ValueError("majority and expert label lists must align")
    return binary_f1(majority_labels, expert_labels)


def cohens_kappa(labels_a: Sequence[int], labels_b: Sequence[int]) -> float:
    """Chance-corrected agreement between two raters: (p_o - p_e) / (1 - p_e)."""
    if len(labels_a) != len(labels_b):
        raise ValueError("label lists must have equal length")
    if not labels_a:
        raise ValueError("kappa undefined: no items")
    n = len(labels_a)
    for v in list(labels_a) + list(labels_b):
        if v not in (0, 1):
            raise ValueError("labels must be binary 0/1")
    p_o = sum(1 for a, b in zip(labels_a, labels_b) if a == b) / n
    pa1 = sum(labels_a) / n
    pb1 = sum(labels_b) / n
    p_e = pa1 * pb1 + (1 - pa1) * (1 - pb1)
    if p_e == 1.0:
        raise ValueError("kappa undefined: expected agreement is 1")
    return (p_o - p_e) / (1.0 - p_e)
