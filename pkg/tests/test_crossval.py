import numpy as np
import pytest

from tracekit.corpus import Corpus, GeneratorConfig, Segment, synthesize_corpus
from tracekit.evaluation.crossval import (
    CrossDomainMatrix,
    MetricValue,
    cross_domain,
    cross_validate,
)
from tracekit.models import train_naive_bayes


def nb_trainer(corpus, seed):
    model, _ = train_naive_bayes(corpus, alpha=1.0)
    return model


class ConstantPredictor:
    def predict_log_odds(self, text):
        return -1.0


def make_domains(seed=0):
    """Three synthetic domains sharing one signal token."""
    domains = {}
    for k, name in enumerate(["alpha_zone", "beta_zone", "gamma_zone"]):
        config = GeneratorConfig(
            n_docs=300,
            positive_rate=0.3,
            signal_tokens=("sharedsig", f"ownsig{k}"),
            noise_vocab_size=30,
            doc_length=10,
            domain=name,
        )
        domains[name] = synthesize_corpus(config, seed=seed + k)
    return domains


class TestCrossValidate:
    def test_shuffle_mode_five_runs(self, small_synthetic):
        report = cross_validate(nb_trainer, small_synthetic, folds=5, seed=3, model="nb")
        assert report.metrics["auroc"].n_runs == 5
        assert report.metrics["auroc"].mean > 0.9
        assert report.metrics["auroc"].std_error >= 0.0
        assert report.model == "nb"
        assert report.dataset == "synthetic"

    def test_kfold_mode(self, small_synthetic):
        report = cross_validate(nb_trainer, small_synthetic, folds=4, seed=1, mode="kfold")
        assert report.metrics["f1_binary"].n_runs == 4

    def test_constant_predictor_zero_std_error(self):
        labels = [1] * 20 + [0] * 80
        corpus = Corpus(
            [Segment(f"s{i}", f"text {i}", l, "synthetic") for i, l in enumerate(labels)]
        )
        report = cross_validate(
            lambda c, s: ConstantPredictor(), corpus, folds=5, seed=0, mode="kfold"
        )
        acc = report.metrics["accuracy"]
        assert acc.mean == pytest.approx(0.8)
        assert acc.std_error == 0.0

    def test_deterministic_under_seed(self, small_synthetic):
        a = cross_validate(nb_trainer, small_synthetic, seed=5)
        b = cross_validate(nb_trainer, small_synthetic, seed=5)
        c = cross_validate(nb_trainer, small_synthetic, seed=6)
        assert a.to_dict() == b.to_dict()
        assert a.to_dict() != c.to_dict()

    def test_failed_run_cites_index(self, small_synthetic):
        calls = {"n": 0}

        def flaky_trainer(corpus, seed):
            calls["n"] += 1
            if calls["n"] == 3:
                raise ValueError("synthetic failure")
            return nb_trainer(corpus, seed)

        with pytest.raises(RuntimeError, match="run 2 failed"):
            cross_validate(flaky_trainer, small_synthetic, folds=5, seed=0)

    def test_jobs_parallel_matches_serial(self, small_synthetic):
        serial = cross_validate(nb_trainer, small_synthetic, seed=4, jobs=1)
        parallel = cross_validate(nb_trainer, small_synthetic, seed=4, jobs=4)
        assert serial.to_dict() == parallel.to_dict()

    def test_format_cell(self):
        mv = MetricValue(mean=0.531, std_error=0.0912, values=(0.4, 0.5, 0.7))
        assert mv.format_cell() == "0.53 ± 0.09"


class TestCrossDomain:
    def test_grid_shape_and_transfer(self):
        domains = make_domains(seed=10)
        matrix = cross_domain(nb_trainer, domains, include_combined=True, seed=2, runs=2)
        assert matrix.train_domains == ("alpha_zone", "beta_zone", "gamma_zone", "all")
        assert matrix.test_domains == ("alpha_zone", "beta_zone", "gamma_zone")
        for train in matrix.train_domains:
            for test in matrix.test_domains:
                cell = matrix.primary(train, test)
                assert cell.n_runs == 2
                assert 0.0 <= cell.mean <= 1.0

    def test_diagonal_dominates_rows_and_all_cells_transfer(self):
        domains = make_domains(seed=20)
        matrix = cross_domain(nb_trainer, domains, include_combined=False, seed=7, runs=3)
        for train in matrix.test_domains:
            diag = matrix.primary(train, train).mean
            for test in matrix.test_domains:
                assert matrix.primary(train, test).mean > 0.5
                if test != train:
                    assert diag >= matrix.primary(train, test).mean

    def test_deterministic_under_seed(self):
        domains = make_domains(seed=30)
        a = cross_domain(nb_trainer, domains, seed=9, runs=2)
        b = cross_domain(nb_trainer, domains, seed=9, runs=2)
        assert a.to_dict() == b.to_dict()

    def test_id_overlap_aborts(self):
        base = synthesize_corpus(
            GeneratorConfig(n_docs=60, positive_rate=0.4, signal_tokens=("sig",), domain="one"),
            seed=0,
        )
        clone = Corpus(
            [Segment(seg.id, seg.text, seg.label, "two") for seg in base], domain="two"
        )
        with pytest.raises(RuntimeError, match="overlap"):
            cross_domain(
                nb_trainer, {"one": base, "two": clone}, include_combined=False, seed=0, runs=1
            )

    def test_per_domain_trainers(self):
        domains = make_domains(seed=40)

        def stronger(corpus, seed):
            model, _ = train_naive_bayes(corpus, alpha=0.5)
            return model

        trainers = {name: nb_trainer for name in domains}
        trainers["all"] = stronger
        matrix = cross_domain(trainers, domains, include_combined=True, seed=1, runs=1)
        assert ("all", "alpha_zone") in matrix.cells

    def test_rows_for_csv_cover_grid(self):
        domains = make_domains(seed=50)
        matrix = cross_domain(nb_trainer, domains, include_combined=True, seed=0, runs=1)
        rows = matrix.as_rows()
        assert len(rows) == 4 * 3 * 5  # train rows x test domains x metrics
        assert {r["metric"] for r in rows} == {
            "auroc", "f1_binary", "accuracy", "precision", "recall",
        }
