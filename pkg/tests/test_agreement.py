import numpy as np
import pytest

from tracekit.evaluation.agreement import (
    AnnotationSet,
    cohens_kappa,
    expert_agreement,
    krippendorff_alpha,
    majority_vote,
)


def annotation_set(rows):
    return AnnotationSet(
        item_ids=tuple(f"i{k}" for k in range(len(rows))),
        annotator_ids=("A", "B", "C")[: len(rows[0])],
        votes=tuple(tuple(row) for row in rows),
    )


class TestKrippendorffAlpha:
    def test_hand_computed_ten_items(self):
        # Coincidence matrix computed by hand for this table:
        # o11=11, o00=10, o01=o10=3, n=27;
        # D_o = 6/27, D_e = 2*13*14/(27*26) = 14/27, alpha = 1 - 3/7 = 4/7.
        rows = [
            (1, 1, None),
            (1, 1, 1),
            (0, 0, 1),
            (0, 0, 0),
            (1, 0, 1),
            (0, 0, None),
            (1, 1, 1),
            (0, 1, 0),
            (1, None, 1),
            (0, 0, 0),
        ]
        assert krippendorff_alpha(annotation_set(rows)) == pytest.approx(4 / 7, abs=1e-9)

    def test_perfect_agreement_is_one(self):
        rows = [(1, 1, 1), (0, 0, 0), (1, 1, None), (0, 0, 0)]
        assert krippendorff_alpha(annotation_set(rows)) == pytest.approx(1.0, abs=1e-12)

    def test_independent_annotators_near_zero(self):
        rng = np.random.default_rng(101)
        rows = [tuple(int(v) for v in rng.integers(0, 2, 3)) for _ in range(1000)]
        # guard against a degenerate draw
        rows[0] = (0, 1, 0)
        alpha = krippendorff_alpha(annotation_set(rows))
        assert abs(alpha) < 0.05

    def test_single_vote_items_are_excluded(self):
        rows = [(1, None, None), (1, 0, None), (0, 1, None), (1, 1, None), (0, 0, None)]
        with_single = krippendorff_alpha(annotation_set(rows))
        without = krippendorff_alpha(annotation_set(rows[1:]))
        assert with_single == pytest.approx(without, abs=1e-12)

    def test_no_variation_undefined(self):
        rows = [(1, 1), (1, 1)]
        with pytest.raises(ValueError, match="alpha undefined"):
            krippendorff_alpha(annotation_set(rows))

    def test_no_pairable_values_undefined(self):
        rows = [(1, None), (0, None)]
        with pytest.raises(ValueError, match="alpha undefined"):
            krippendorff_alpha(annotation_set(rows))


class TestMajorityVote:
    def test_strict_majority(self):
        labels, ties = majority_vote(annotation_set([(1, 1, 0), (0, 0, 1), (1, 1, 1)]))
        assert labels == [1, 0, 1]
        assert ties == [False, False, False]

    def test_ties_resolve_to_zero_and_flag(self):
        labels, ties = majority_vote(annotation_set([(1, 0, None), (1, 0, 1)]))
        assert labels == [0, 1]
        assert ties == [True, False]

    def test_missing_votes_ignored(self):
        labels, ties = majority_vote(annotation_set([(None, 1, 1), (None, 0, None)]))
        assert labels == [1, 0]
        assert ties == [False, False]


class TestExpertAgreement:
    def test_f1_against_expert(self):
        assert expert_agreement([1, 0, 1, 0], [1, 1, 0, 0]) == pytest.approx(0.5)

    def test_perfect(self):
        assert expert_agreement([1, 0, 1], [1, 0, 1]) == 1.0

    def test_misaligned_rejected(self):
        with pytest.raises(ValueError, match="align"):
            expert_agreement([1, 0], [1])


class TestCohensKappa:
    def test_worked_two_by_two(self):
        # a=20 both-positive, b=5, c=10, d=15: p_o=0.7, p_e=0.5, kappa=0.4
        a_votes = [1] * 20 + [1] * 5 + [0] * 10 + [0] * 15
        b_votes = [1] * 20 + [0] * 5 + [1] * 10 + [0] * 15
        assert cohens_kappa(a_votes, b_votes) == pytest.approx(0.4, abs=1e-12)

    def test_perfect_and_independent(self):
        assert cohens_kappa([1, 0, 1, 0], [1, 0, 1, 0]) == 1.0
        rng = np.random.default_rng(77)
        a = [int(v) for v in rng.integers(0, 2, 1000)]
        b = [int(v) for v in rng.integers(0, 2, 1000)]
        assert abs(cohens_kappa(a, b)) < 0.05

    def test_undefined_when_expected_agreement_is_one(self):
        with pytest.raises(ValueError, match="kappa undefined"):
            cohens_kappa([1, 1, 1], [1, 1, 1])


class TestAnnotationSetValidation:
    def test_requires_two_annotators(self):
        with pytest.raises(ValueError, match="two annotators"):
            AnnotationSet(("i1",), ("A",), ((1,),))

    def test_item_without_votes_rejected(self):
        with pytest.raises(ValueError, match="no votes"):
            annotation_set([(None, None, None)])

    def test_non_binary_label_rejected(self):
        with pytest.raises(ValueError, match="0/1"):
            annotation_set([(2, 1, 0)])

    def test_from_csv_long_form(self, tmp_path):
        path = tmp_path / "votes.csv"
        path.write_text(
            "item_id,annotator_id,label\n"
            "i1,A,1\ni1,B,1\n"
            "i2,A,0\ni2,B,1\ni2,C,0\n"
        )
        ann = AnnotationSet.from_csv(str(path))
        assert ann.item_ids == ("i1", "i2")
        assert ann.annotator_ids == ("A", "B", "C")
        assert ann.votes == ((1, 1, None), (0, 1, 0))

    def test_from_csv_duplicate_vote_rejected(self, tmp_path):
        path = tmp_path / "votes.csv"
        path.write_text("item_id,annotator_id,label\ni1,A,1\ni1,A,0\n")
        with pytest.raises(ValueError, match="duplicate vote at line 3"):
            AnnotationSet.from_csv(str(path))

    def test_from_csv_bad_label_cites_line(self, tmp_path):
        path = tmp_path / "votes.csv"
        path.write_text("item_id,annotator_id,label\ni1,A,maybe\n")
        with pytest.raises(ValueError, match="line 2"):
            AnnotationSet.from_csv(str(path))
