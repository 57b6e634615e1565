"""Classifier suite behind a single text-to-log-odds Predictor contract.

Three local model families are provided: multinomial/Bernoulli naive Bayes
over bag-of-words counts, logistic regression over TF-IDF n-grams trained by
full-batch gradient descent with backtracking line search, and a small
feed-forward network over TF-IDF unigrams trained by mini-batch SGD. All of
them, as well as the remote predictors in :mod:`tracekit.llm_client` and
:mod:`tracekit.bridge`, expose ``predict_log_odds(text) -> float`` so that
evaluation and explanation code never needs to know which family it is
looking at.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

import numpy as np

from tracekit.container import read_container, write_container
from tracekit.corpus import (
    DEFAULT_TOKENIZER,
    Corpus,
    FeatureVector,
    TokenizerConfig,
    Vocabulary,
    build_vocab,
    extract_ngrams,
    tfidf_matrix,
    tfidf_vectorize,
    tokenize,
)

__all__ = [
    "Predictor",
    "LatentPredictor",
    "TrainingReport",
    "classify",
    "NaiveBayesModel",
    "train_naive_bayes",
    "LogRegModel",
    "train_ngram_logreg",
    "FeedForwardModel",
    "train_ffnn",
    "save_model",
    "load_model",
]

MODEL_FORMAT = "tracekit-model/1"


@runtime_checkable
class Predictor(Protocol):
    """Anything that scores text with a finite real log-odds value."""

    def predict_log_odds(self, text: str) -> float: ...


@runtime_checkable
class LatentPredictor(Predictor, Protocol):
    """Predictor that also exposes a fixed-dimension latent representation."""

    def latent(self, text: str) -> np.ndarray: ...


def classify(predictor: Predictor, text: str, threshold_log_odds: float = 0.0) -> int:
    """Map a log-odds score to a hard label; exact ties go to the negative class."""
    return 1 if predictor.predict_log_odds(text) > threshold_log_odds else 0


@dataclass
class TrainingReport:
    """What happened during a fit: losses, iterations, convergence, warnings."""

    model_type: str
    n_iter: int
    loss_history: list[float] = field(default_factory=list)
    converged: bool = True
    warnings: list[str] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Naive Bayes
# ---------------------------------------------------------------------------


@dataclass
class NaiveBayesModel:
    """Additive bag-of-words classifier with Laplace smoothing.

    ``token_weights[t]`` is the class log-likelihood ratio of token t; the
    smoothing denominator reserves one extra outcome beyond the seen
    vocabulary so unseen tokens keep a proper smoothing-only weight.
    Prediction is ``prior_log_odds`` plus the sum of weights over the token
    sequence, with multiplicity iff ``use_counts``.
    """

    prior_log_odds: float
    token_weights: dict[str, float]
    unseen_weight: float
    alpha: float
    use_counts: bool
    tokenizer: TokenizerConfig = DEFAULT_TOKENIZER

    def predict_log_odds(self, text: str) -> float:
        tokens = tokenize(text, self.tokenizer)
        if not self.use_counts:
            tokens = list(dict.fromkeys(tokens))
        total = self.prior_log_odds
        for tok in tokens:
            total += self.token_weights.get(tok, self.unseen_weight)
        return total


def train_naive_bayes(
    corpus: Corpus,
    alpha: float = 1.0,
    use_counts: bool = True,
    config: TokenizerConfig = DEFAULT_TOKENIZER,
) -> tuple[NaiveBayesModel, TrainingReport]:
    """Closed-form naive Bayes fit; deterministic given data order and alpha."""
    if alpha <= 0.0:
        raise ValueError("alpha must be positive")
    n_docs = {0: 0, 1: 0}
    counts: dict[int, dict[str, int]] = {0: {}, 1: {}}
    totals = {0: 0, 1: 0}
    for seg in corpus:
        if seg.label is None:
            continue
        n_docs[seg.label] += 1
        tokens = tokenize(seg.text, config)
        if not use_counts:
            tokens = list(dict.fromkeys(tokens))
        for tok in tokens:
            counts[seg.label][tok] = counts[seg.label].get(tok, 0) + 1
            totals[seg.label] += 1
    if n_docs[0] == 0 or n_docs[1] == 0:
        raise ValueError("degenerate prior: need labeled segments from both classes")
    vocab = sorted(set(counts[0]) | set(counts[1]))
    outcomes = len(vocab) + 1  # one reserved slot keeps unseen-token mass proper
    denom1 = totals[1] + alpha * outcomes
    denom0 = totals[0] + alpha * outcomes
    weights = {
        tok: math.log((counts[1].get(tok, 0) + alpha) / denom1)
        - math.log((counts[0].get(tok, 0) + alpha) / denom0)
        for tok in vocab
    }
    model = NaiveBayesModel(
        prior_log_odds=math.log(n_docs[1] / n_docs[0]),
        token_weights=weights,
        unseen_weight=math.log(alpha / denom1) - math.log(alpha / denom0),
        alpha=alpha,
        use_counts=use_counts,
        tokenizer=config,
    )
    report = TrainingReport(model_type="naive_bayes", n_iter=1)
    return model, report


# ---------------------------------------------------------------------------
# N-gram logistic regression
# ---------------------------------------------------------------------------


def _logistic_loss(z: np.ndarray, y: np.ndarray) -> float:
    # mean of softplus(z) - y*z, numerically stable for large |z|
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class LogRegModel:
    """Logistic regression over TF-IDF n-gram features."""

    vocab: Vocabulary
    coef: np.ndarray
    bias: float
    n_range: tuple[int, int]
    C: float
    penalty: str
    tokenizer: TokenizerConfig = DEFAULT_TOKENIZER

    @property
    def weights(self) -> FeatureVector:
        nz = np.flatnonzero(self.coef)
        return FeatureVector(
            indices=tuple(int(i) for i in nz),
            weights=tuple(float(self.coef[i]) for i in nz),
            dim=len(self.vocab),
        )

    def _features(self, text: str) -> FeatureVector:
        grams = extract_ngrams(tokenize(text, self.tokenizer), self.n_range)
        return tfidf_vectorize(grams, self.vocab)

    def predict_log_odds(self, text: str) -> float:
        fv = self._features(text)
        total = self.bias
        for idx, w in zip(fv.indices, fv.weights):
            total += self.coef[idx] * w
        return float(total)


def train_ngram_logreg(
    corpus: Corpus,
    n_range: tuple[int, int] = (1, 2),
    C: float = 1.0,
    penalty: str = "l2",
    min_df: int = 1,
    tol: float = 1e-6,
    max_iter: int = 2000,
    config: TokenizerConfig = DEFAULT_TOKENIZER,
) -> tuple[LogRegModel, TrainingReport]:
    """Full-batch gradient descent with backtracking line search.

    Objective: mean logistic loss plus ``(1/(2C)) * ||w||^2`` when
    ``penalty='l2'`` (bias unpenalized); no penalty term for
    ``penalty='none'``. Deterministic: weights start at zero and no randomness
    is involved. Non-convergence within ``max_iter`` is recorded as a warning
    on the report; the fitted model is still returned.
    """
    if penalty not in ("l2", "none"):
        raise ValueError(f"unknown penalty {penalty!r}")
    if penalty == "l2" and C <= 0.0:
        raise ValueError("C must be positive for l2 penalty")
    labels = [seg.label for seg in corpus]
    if any(l is None for l in labels):
        raise ValueError("training corpus must be fully labeled")
    vocab = build_vocab(corpus, min_df=min_df, config=config, n_range=n_range)
    X = tfidf_matrix(corpus, vocab, config=config, n_range=n_range)
    y = np.array(labels, dtype=float)

    w = np.zeros(X.shape[1])
    b = 0.0

    def objective(wv: np.ndarray, bv: float) -> float:
        z = X @ wv + bv
        loss = _logistic_loss(z, y)
        if penalty == "l2":
            loss += float(wv @ wv) / (2.0 * C)
        return loss

    def gradients(wv: np.ndarray, bv: float) -> tuple[np.ndarray, float]:
        z = X @ wv + bv
        resid = _sigmoid(z) - y
        gw = X.T @ resid / len(y)
        if penalty == "l2":
            gw = gw + wv / C
        gb = float(np.mean(resid))
        return gw, gb

    loss = objective(w, b)
    history = [loss]
    converged = False
    warnings: list[str] = []
    step = 1.0
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        gw, gb = gradients(w, b)
        gnorm_sq = float(gw @ gw) + gb * gb
        if math.sqrt(gnorm_sq) < tol:
            converged = True
            n_iter -= 1
            break
        step = min(step * 2.0, 1e6)
        accepted = False
        for _ in range(80):
            cand_w = w - step * gw
            cand_b = b - step * gb
            cand_loss = objective(cand_w, cand_b)
            if cand_loss <= loss - 1e-4 * step * gnorm_sq:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            warnings.append("line search stalled; returning current iterate")
            break
        w, b, loss = cand_w, cand_b, cand_loss
        history.append(loss)
    else:
        n_iter = max_iter
    if not converged and not warnings:
        warnings.append(
            f"did not converge: gradient norm above {tol} after {max_iter} iterations"
        )
    model = LogRegModel(
        vocab=vocab, coef=w, bias=float(b), n_range=tuple(n_range), C=C,
        penalty=penalty, tokenizer=config,
    )
    report = TrainingReport(
        model_type="ngram_logreg",
        n_iter=n_iter,
        loss_history=history,
        converged=converged,
        warnings=warnings,
    )
    return model, report


# ---------------------------------------------------------------------------
# Feed-forward network
# ---------------------------------------------------------------------------


def _ffnn_forward(
    weights: list[np.ndarray], biases: list[np.ndarray], X: np.ndarray
) -> tuple[list[np.ndarray], np.ndarray]:
    """Forward pass; returns per-layer post-ReLU activations and logits."""
    hiddens: list[np.ndarray] = []
    h = X
    for W, b in zip(weights[:-1], biases[:-1]):
        h = np.maximum(h @ W + b, 0.0)
        hiddens.append(h)
    logits = h @ weights[-1] + biases[-1]
    return hiddens, logits.ravel()


def _ffnn_loss_and_grads(
    weights: list[np.ndarray],
    biases: list[np.ndarray],
    X: np.ndarray,
    y: np.ndarray,
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Mean logistic loss and its gradients via backpropagation."""
    hiddens, z = _ffnn_forward(weights, biases, X)
    loss = _logistic_loss(z, y)
    n = len(y)
    dz = (_sigmoid(z) - y)[:, None] / n
    grad_w: list[np.ndarray] = [np.empty(0)] * len(weights)
    grad_b: list[np.ndarray] = [np.empty(0)] * len(biases)
    upstream = dz
    for layer in range(len(weights) - 1, -1, -1):
        inputs = X if layer == 0 else hiddens[layer - 1]
        grad_w[layer] = inputs.T @ upstream
        grad_b[layer] = upstream.sum(axis=0)
        if layer > 0:
            upstream = (upstream @ weights[layer].T) * (hiddens[layer - 1] > 0.0)
    return loss, grad_w, grad_b


@dataclass
class FeedForwardModel:
    """ReLU MLP over TF-IDF unigram features with a single output logit."""

    vocab: Vocabulary
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    hidden_dims: tuple[int, ...]
    tokenizer: TokenizerConfig = DEFAULT_TOKENIZER

    def _vector(self, text: str) -> np.ndarray:
        fv = tfidf_vectorize(tokenize(text, self.tokenizer), self.vocab)
        return fv.to_dense()

    def predict_log_odds(self, text: str) -> float:
        _, logits = _ffnn_forward(self.weights, self.biases, self._vector(text)[None, :])
        return float(logits[0])

    def latent(self, text: str) -> np.ndarray:
        """Last hidden-layer activation vector."""
        hiddens, _ = _ffnn_forward(self.weights, self.biases, self._vector(text)[None, :])
        return hiddens[-1][0].copy()

    @property
    def latent_dim(self) -> int:
        return self.hidden_dims[-1]


def _init_mlp(
    dims: list[int], rng: np.random.Generator
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    weights = []
    biases = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / math.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def train_ffnn(
    corpus: Corpus,
    hidden_dims: tuple[int, ...] = (50,),
    lr: float = 0.1,
    epochs: int = 10,
    batch_size: int = 32,
    seed: int = 0,
    min_df: int = 1,
    config: TokenizerConfig = DEFAULT_TOKENIZER,
) -> tuple[FeedForwardModel, TrainingReport]:
    """Mini-batch SGD on mean logistic loss.

    Weights initialize uniform in +-1/sqrt(fan_in) from the seed, biases at
    zero. ``epochs=0`` returns the untouched initialization. A non-finite
    loss aborts with "diverged; lower lr".
    """
    if len(hidden_dims) not in (1, 2):
        raise ValueError("hidden_dims must have one or two layers")
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    labels = [seg.label for seg in corpus]
    if any(l is None for l in labels):
        raise ValueError("training corpus must be fully labeled")
    vocab = build_vocab(corpus, min_df=min_df, config=config)
    X = tfidf_matrix(corpus, vocab, config=config)
    y = np.array(labels, dtype=float)
    rng = np.random.default_rng(seed)
    dims = [len(vocab), *hidden_dims, 1]
    weights, biases = _init_mlp(dims, rng)

    history: list[float] = []
    for _ in range(epochs):
        order = rng.permutation(len(y))
        for start in range(0, len(y), batch_size):
            batch = order[start : start + batch_size]
            loss, gw, gb = _ffnn_loss_and_grads(weights, biases, X[batch], y[batch])
            if not math.isfinite(loss):
                raise RuntimeError("diverged; lower lr")
            for layer in range(len(weights)):
                weights[layer] -= lr * gw[layer]
                biases[layer] -= lr * gb[layer]
        epoch_loss, _, _ = _ffnn_loss_and_grads(weights, biases, X, y)
        if not math.isfinite(epoch_loss):
            raise RuntimeError("diverged; lower lr")
        history.append(epoch_loss)

    model = FeedForwardModel(
        vocab=vocab,
        weights=weights,
        biases=biases,
        hidden_dims=tuple(hidden_dims),
        tokenizer=config,
    )
    report = TrainingReport(model_type="ffnn", n_iter=epochs, loss_history=history)
    return model, report


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _vocab_payload(vocab: Vocabulary) -> dict:
    return {
        "tokens": list(vocab.tokens),
        "doc_freq": list(vocab.doc_freq),
        "n_docs": vocab.n_docs,
    }


def _vocab_from_payload(payload: dict) -> Vocabulary:
    return Vocabulary(
        tokens=tuple(payload["tokens"]),
        doc_freq=tuple(payload["doc_freq"]),
        n_docs=payload["n_docs"],
    )


def save_model(model, path: str) -> None:
    """Serialize a model; JSON for NB and LR, a tensor container for FFNN.

    Prediction after a load round-trip is bit-exact: JSON floats are written
    with shortest round-trip representation and tensors as raw bytes.
    """
    if isinstance(model, NaiveBayesModel):
        payload = {
            "format": MODEL_FORMAT,
            "type": "naive_bayes",
            "prior_log_odds": model.prior_log_odds,
            "token_weights": model.token_weights,
            "unseen_weight": model.unseen_weight,
            "alpha": model.alpha,
            "use_counts": model.use_counts,
            "url_pattern": model.tokenizer.url_pattern,
        }
    elif isinstance(model, LogRegModel):
        payload = {
            "format": MODEL_FORMAT,
            "type": "ngram_logreg",
            "vocab": _vocab_payload(model.vocab),
            "coef": model.coef.tolist(),
            "bias": model.bias,
            "n_range": list(model.n_range),
            "C": model.C,
            "penalty": model.penalty,
            "url_pattern": model.tokenizer.url_pattern,
        }
    elif isinstance(model, FeedForwardModel):
        header = {
            "format": MODEL_FORMAT,
            "type": "ffnn",
            "vocab": _vocab_payload(model.vocab),
            "hidden_dims": list(model.hidden_dims),
            "url_pattern": model.tokenizer.url_pattern,
        }
        tensors: dict[str, np.ndarray] = {}
        for k, (W, b) in enumerate(zip(model.weights, model.biases)):
            tensors[f"W{k}"] = W
            tensors[f"b{k}"] = b
        write_container(path, header, tensors)
        return
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, ensure_ascii=False)
        fh.write("\n")


def load_model(path: str):
    """Load any model written by :func:`save_model`."""
    with open(path, "rb") as fh:
        first = fh.readline()
    header = json.loads(first.decode("utf-8"))
    if header.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path}: not a {MODEL_FORMAT} file")
    kind = header.get("type")
    if kind == "naive_bayes":
        return NaiveBayesModel(
            prior_log_odds=header["prior_log_odds"],
            token_weights=dict(header["token_weights"]),
            unseen_weight=header["unseen_weight"],
            alpha=header["alpha"],
            use_counts=header["use_counts"],
            tokenizer=TokenizerConfig(url_pattern=header["url_pattern"]),
        )
    if kind == "ngram_logreg":
        return LogRegModel(
            vocab=_vocab_from_payload(header["vocab"]),
            coef=np.array(header["coef"], dtype=float),
            bias=header["bias"],
            n_range=tuple(header["n_range"]),
            C=header["C"],
            penalty=header["penalty"],
            tokenizer=TokenizerConfig(url_pattern=header["url_pattern"]),
        )
    if kind == "ffnn":
        header, tensors = read_container(path)
        n_layers = len(tensors) // 2
        return FeedForwardModel(
            vocab=_vocab_from_payload(header["vocab"]),
            weights=[tensors[f"W{k}"] for k in range(n_layers)],
            biases=[tensors[f"b{k}"] for k in range(n_layers)],
            hidden_dims=tuple(header["hidden_dims"]),
            tokenizer=TokenizerConfig(url_pattern=header["url_pattern"]),
        )
    raise ValueError(f"{path}: unknown model type {kind!r}")
