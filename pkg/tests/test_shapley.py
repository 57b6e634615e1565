import itertools
import math

import numpy as np
import pytest

from tracekit.corpus import Corpus, Segment, tokenize
from tracekit.explain.shapley import EXACT_TOKEN_LIMIT, ShapReport, exact_shap, shap_sample
from tracekit.models import train_ffnn, train_naive_bayes


class ConstantPredictor:
    def predict_log_odds(self, text):
        return 1.25


class AdditiveToy:
    """Log-odds is a fixed weight per distinct present token."""

    def __init__(self, weights):
        self.weights = weights

    def predict_log_odds(self, text):
        present = set(tokenize(text))
        return sum(w for t, w in self.weights.items() if t in present)


class TokenCounter:
    def predict_log_odds(self, text):
        return float(len(tokenize(text)))


class CountingWrapper:
    def __init__(self, inner):
        self.inner = inner
        self.calls = 0

    def predict_log_odds(self, text):
        self.calls += 1
        return self.inner.predict_log_odds(text)


class FailingPredictor:
    def predict_log_odds(self, text):
        if "bomb" in text:
            raise ValueError("cannot score this")
        return 0.0


def permutation_enumeration_shap(predictor, tokens):
    """Independent oracle: average marginals over every permutation."""
    n = len(tokens)

    def value(subset):
        kept = [tokens[i] for i in sorted(subset)]
        return predictor.predict_log_odds(" ".join(kept))

    phi = [0.0] * n
    for order in itertools.permutations(range(n)):
        seen = set()
        previous = value(seen)
        for idx in order:
            seen = seen | {idx}
            current = value(seen)
            phi[idx] += current - previous
            previous = current
    total = math.factorial(n)
    return [p / total for p in phi]


@pytest.fixture(scope="module")
def nb_toy():
    corpus = Corpus(
        [
            Segment("a", "wounded in the market", 1, "toy"),
            Segment("b", "they found him wounded", 1, "toy"),
            Segment("c", "calm morning in town", 0, "toy"),
            Segment("d", "the town was calm", 0, "toy"),
        ]
    )
    model, _ = train_naive_bayes(corpus, alpha=1.0, use_counts=True)
    return model


@pytest.fixture(scope="module")
def ffnn_model(small_synthetic):
    model, _ = train_ffnn(small_synthetic, hidden_dims=(16,), lr=0.5, epochs=6, seed=3)
    return model


class TestExactShap:
    def test_single_token_gets_full_minus_baseline(self, nb_toy):
        report = exact_shap(nb_toy, "wounded")
        assert report.phi == (report.full_value - report.baseline_value,)

    def test_two_token_additive_game(self):
        toy = AdditiveToy({"alpha": 0.7, "beta": -1.3})
        report = exact_shap(toy, "alpha beta")
        assert report.phi[0] == pytest.approx(0.7, abs=1e-12)
        assert report.phi[1] == pytest.approx(-1.3, abs=1e-12)

    def test_symmetric_tokens_get_equal_phi(self):
        report = exact_shap(TokenCounter(), "alpha beta gamma")
        assert report.phi == (1.0, 1.0, 1.0)

    def test_dummy_token_gets_zero(self):
        toy = AdditiveToy({"alpha": 2.0})
        report = exact_shap(toy, "alpha zzz")
        assert report.phi[report.tokens.index("zzz")] == 0.0

    def test_matches_permutation_enumeration_oracle(self, ffnn_model):
        text = "shrapnel filler0001 ambush filler0002 filler0003"
        report = exact_shap(ffnn_model, text)
        oracle = permutation_enumeration_shap(ffnn_model, list(report.tokens))
        assert np.allclose(report.phi, oracle, atol=1e-12)

    def test_nb_count_mode_phi_equals_token_weights(self, nb_toy):
        text = "wounded in the market they found him calm"
        report = exact_shap(nb_toy, text)
        for token, phi in zip(report.tokens, report.phi):
            assert phi == pytest.approx(nb_toy.token_weights[token], abs=1e-10)

    def test_efficiency_identity(self, ffnn_model):
        report = exact_shap(ffnn_model, "shrapnel filler0001 filler0002 ambush")
        assert abs(report.residual) <= 1e-10

    def test_token_limit_enforced(self, nb_toy):
        text = " ".join(f"tok{i}" for i in range(EXACT_TOKEN_LIMIT + 1))
        with pytest.raises(ValueError, match="exact oracle limit exceeded"):
            exact_shap(nb_toy, text)

    def test_evaluation_count_is_every_subset(self, nb_toy):
        counter = CountingWrapper(nb_toy)
        report = exact_shap(counter, "wounded calm town")
        assert counter.calls == 8
        assert report.n_samples == 8


class TestShapSample:
    def test_constant_predictor_gives_zero_phi(self):
        report = shap_sample(ConstantPredictor(), "alpha beta gamma", n_samples=50, seed=0)
        assert report.phi == (0.0, 0.0, 0.0)
        assert report.std_errors == (0.0, 0.0, 0.0)

    def test_additive_nb_converges_to_weights(self, nb_toy):
        text = "wounded in the market"
        report = shap_sample(nb_toy, text, n_samples=5000, seed=1)
        for token, phi in zip(report.tokens, report.phi):
            assert phi == pytest.approx(nb_toy.token_weights[token], abs=1e-3)

    def test_matches_exact_oracle_on_six_tokens(self, ffnn_model):
        text = "shrapnel filler0001 ambush filler0002 filler0003 filler0004"
        exact = exact_shap(ffnn_model, text)
        sampled = shap_sample(ffnn_model, text, n_samples=10_000, seed=2)
        tokens = list(exact.tokens)
        subset_values = []
        for r in range(len(tokens) + 1):
            for kept in itertools.combinations(range(len(tokens)), r):
                joined = " ".join(tokens[i] for i in kept)
                subset_values.append(ffnn_model.predict_log_odds(joined))
        value_range = max(subset_values) - min(subset_values)
        mae = np.mean(np.abs(np.array(exact.phi) - np.array(sampled.phi)))
        assert mae <= 0.02 * value_range

    def test_efficiency_holds_with_positive_std_errors(self, ffnn_model):
        report = shap_sample(
            ffnn_model, "shrapnel filler0001 ambush filler0002", n_samples=400, seed=5
        )
        assert any(se > 0 for se in report.std_errors)
        se_sum = math.sqrt(sum(se**2 for se in report.std_errors))
        assert abs(report.residual) <= max(3 * se_sum, 1e-9)

    def test_deterministic_under_seed(self, ffnn_model):
        a = shap_sample(ffnn_model, "shrapnel ambush filler0001", n_samples=200, seed=9)
        b = shap_sample(ffnn_model, "shrapnel ambush filler0001", n_samples=200, seed=9)
        assert a == b
        c = shap_sample(ffnn_model, "shrapnel ambush filler0001", n_samples=200, seed=10)
        assert a.phi != c.phi

    def test_memoization_caps_predictor_calls(self, nb_toy):
        counter = CountingWrapper(nb_toy)
        shap_sample(counter, "wounded calm town in", n_samples=2000, seed=0)
        assert counter.calls <= 2**4

    def test_rejects_empty_text_and_bad_sample_count(self, nb_toy):
        with pytest.raises(ValueError, match="no tokens"):
            shap_sample(nb_toy, "   ", n_samples=10, seed=0)
        with pytest.raises(ValueError, match="n_samples"):
            shap_sample(nb_toy, "wounded", n_samples=0, seed=0)

    def test_predictor_failure_carries_token_context(self):
        with pytest.raises(RuntimeError, match="predictor failed while scoring"):
            shap_sample(FailingPredictor(), "the bomb market", n_samples=5, seed=0)

    def test_report_validates_alignment(self):
        with pytest.raises(ValueError, match="phi must align"):
            ShapReport(
                tokens=("a", "b"),
                phi=(0.1,),
                std_errors=(0.0, 0.0),
                baseline_value=0.0,
                full_value=0.1,
                n_samples=1,
                seed=0,
            )

    def test_to_dict_round_trip_fields(self, nb_toy):
        report = shap_sample(nb_toy, "wounded calm", n_samples=10, seed=4)
        payload = report.to_dict()
        assert payload["tokens"] == ["wounded", "calm"]
        assert payload["n_samples"] == 10
        assert payload["seed"] == 4
        assert len(payload["phi"]) == 2
