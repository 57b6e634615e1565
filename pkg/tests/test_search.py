import math

import numpy as np
import pytest

from tracekit.corpus import GeneratorConfig, synthesize_corpus
from tracekit.evaluation.search import (
    Choice,
    IntRange,
    LogUniform,
    SearchSpace,
    hyperparameter_search,
)
from tracekit.models import train_naive_bayes

REGION_LO = 10.0 ** -0.18
REGION_HI = 10.0 ** 0.18


class RiggedPredictor:
    """Perfect signal detector inside the target region, noise outside."""

    def __init__(self, in_region, signal="shrapnel"):
        self.in_region = in_region
        self.signal = signal

    def predict_log_odds(self, text):
        if self.in_region:
            return 5.0 if self.signal in text else -5.0
        return float((hash(text) % 1000) - 500) / 100.0


def rigged_factory(params):
    alpha = params["alpha"]
    in_region = REGION_LO <= alpha <= REGION_HI

    def trainer(corpus, seed):
        return RiggedPredictor(in_region)

    return trainer


@pytest.fixture(scope="module")
def search_corpus():
    config = GeneratorConfig(
        n_docs=80, positive_rate=0.4, signal_tokens=("shrapnel",), noise_vocab_size=25
    )
    return synthesize_corpus(config, seed=5)


class TestDomains:
    def test_choice_samples_listed_values(self):
        rng = np.random.default_rng(0)
        domain = Choice(values=("l2", "none"))
        seen = {domain.sample(rng) for _ in range(50)}
        assert seen == {"l2", "none"}

    def test_int_range_inclusive(self):
        rng = np.random.default_rng(1)
        domain = IntRange(2, 4)
        seen = {domain.sample(rng) for _ in range(200)}
        assert seen == {2, 3, 4}

    def test_loguniform_bounds_and_spread(self):
        rng = np.random.default_rng(2)
        domain = LogUniform(1e-3, 1e3)
        draws = [domain.sample(rng) for _ in range(500)]
        assert all(1e-3 <= d <= 1e3 for d in draws)
        # roughly uniform in log space: half the draws below 1
        below = sum(1 for d in draws if d < 1.0)
        assert 0.4 < below / len(draws) < 0.6

    def test_invalid_domains_rejected(self):
        with pytest.raises(ValueError):
            IntRange(5, 4)
        with pytest.raises(ValueError):
            LogUniform(0.0, 1.0)
        with pytest.raises(ValueError):
            LogUniform(2.0, 1.0)


class TestSearch:
    def test_deterministic_under_seed(self, search_corpus):
        space = SearchSpace(
            params={"alpha": LogUniform(0.001, 1000.0)}, budget=10, objective="auroc"
        )
        a = hyperparameter_search(rigged_factory, space, search_corpus, seed=3)
        b = hyperparameter_search(rigged_factory, space, search_corpus, seed=3)
        assert a.best_params == b.best_params
        assert [t.to_dict() for t in a.trials] == [t.to_dict() for t in b.trials]

    def test_finds_wide_planted_region(self, search_corpus):
        # region covers half the log measure; budget 12 should land in it
        space = SearchSpace(params={"alpha": LogUniform(0.001, 1000.0)}, budget=12)

        def wide_factory(params):
            in_region = params["alpha"] >= 1.0

            def trainer(corpus, seed):
                return RiggedPredictor(in_region)

            return trainer

        result = hyperparameter_search(wide_factory, space, search_corpus, seed=0)
        assert result.best_params["alpha"] >= 1.0
        assert result.best_score > 0.95

    def test_trial_log_records_failures(self, search_corpus):
        space = SearchSpace(params={"alpha": LogUniform(0.01, 10.0)}, budget=6)
        calls = {"n": 0}

        def sometimes_failing(params):
            def trainer(corpus, seed):
                calls["n"] += 1
                if calls["n"] % 2 == 0:
                    raise ValueError("bad configuration")
                model, _ = train_naive_bayes(corpus, alpha=params["alpha"])
                return model

            return trainer

        result = hyperparameter_search(sometimes_failing, space, search_corpus, seed=1)
        errors = [t for t in result.trials if t.error is not None]
        scored = [t for t in result.trials if t.score is not None]
        assert errors and scored
        assert all("bad configuration" in t.error for t in errors)
        assert result.best_index == max(scored, key=lambda t: (t.score, -t.index)).index

    def test_all_trials_failing_raises(self, search_corpus):
        space = SearchSpace(params={"alpha": LogUniform(0.01, 10.0)}, budget=4)

        def broken_factory(params):
            def trainer(corpus, seed):
                raise ValueError("always broken")

            return trainer

        with pytest.raises(RuntimeError, match="all trials failed"):
            hyperparameter_search(broken_factory, space, search_corpus, seed=0)

    def test_mixed_domain_space_samples_consistently(self, search_corpus):
        space = SearchSpace(
            params={
                "alpha": LogUniform(0.01, 10.0),
                "use_counts": Choice(values=(True, False)),
                "min_df": IntRange(1, 3),
            },
            budget=8,
        )

        def nb_factory(params):
            def trainer(corpus, seed):
                model, _ = train_naive_bayes(
                    corpus, alpha=params["alpha"], use_counts=params["use_counts"]
                )
                return model

            return trainer

        result = hyperparameter_search(nb_factory, space, search_corpus, seed=2)
        assert set(result.best_params) == {"alpha", "use_counts", "min_df"}
        assert 0.0 <= result.best_score <= 1.0

    def test_objective_appendix_alpha_in_range(self):
        # the shipped NB alpha settings must be reachable by the search space
        domain = LogUniform(0.01, 10.0)
        assert domain.lo < 1.01 < domain.hi
        assert domain.lo < 5.97 < domain.hi

    def test_jobs_parallel_matches_serial(self, search_corpus):
        space = SearchSpace(params={"alpha": LogUniform(0.001, 1000.0)}, budget=8)
        serial = hyperparameter_search(rigged_factory, space, search_corpus, seed=4, jobs=1)
        parallel = hyperparameter_search(rigged_factory, space, search_corpus, seed=4, jobs=4)
        assert serial.best_params == parallel.best_params
        assert [t.to_dict() for t in serial.trials] == [t.to_dict() for t in parallel.trials]
