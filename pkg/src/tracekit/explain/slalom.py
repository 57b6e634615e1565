"""Surrogate models pairing a per-token value with a per-token importance.

The surrogate predicts a sequence score as the importance-softmax-weighted
mean of token values: the value axis says what a token contributes on its
own, the importance axis says how strongly it claims the mix when combined
with others. Fitting queries the wrapped predictor on two-token sequences
only, which keeps the probe budget small and makes the model global rather
than tied to one input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..corpus import DEFAULT_TOKENIZER, TokenizerConfig, tokenize
from ..models import Predictor, _sigmoid


@dataclass(frozen=True)
class SlalomFitConfig:
    """Optimizer settings for :func:`fit_slalom`.

    Plain mini-batch SGD with a per-epoch multiplicative learning-rate
    decay. The defaults are tuned so that a planted surrogate over a
    50-token vocabulary is recovered well inside 1e-2.
    """

    epochs: int = 80
    lr: float = 0.5
    lr_decay: float = 0.95
    batch_size: int = 256

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.lr <= 0 or self.lr_decay <= 0 or self.lr_decay > 1:
            raise ValueError("lr must be positive and lr_decay in (0, 1]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")


@dataclass(frozen=True)
class SlalomModel:
    """Fitted surrogate: token values, token importances, and fit quality.

    Importances are only identified up to an additive shift (the softmax
    absorbs constants); ``importance_identifiable`` is False when the fit
    had no way to pin them down at all, e.g. a single-token vocabulary.
    """

    fitted_vocab: tuple[str, ...]
    value: dict[str, float]
    importance: dict[str, float]
    fit_loss: float
    importance_identifiable: bool = True

    def __post_init__(self):
        if not self.fitted_vocab:
            raise ValueError("fitted_vocab must be non-empty")
        for token in self.fitted_vocab:
            v = self.value.get(token)
            s = self.importance.get(token)
            if v is None or s is None:
                raise ValueError(f"token {token!r} missing fitted parameters")
            if not (math.isfinite(v) and math.isfinite(s)):
                raise ValueError(f"token {token!r} has non-finite parameters")

    def to_dict(self) -> dict:
        return {
            "fitted_vocab": list(self.fitted_vocab),
            "value": dict(self.value),
            "importance": dict(self.importance),
            "fit_loss": self.fit_loss,
            "importance_identifiable": self.importance_identifiable,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "SlalomModel":
        return cls(
            fitted_vocab=tuple(payload["fitted_vocab"]),
            value={k: float(v) for k, v in payload["value"].items()},
            importance={k: float(v) for k, v in payload["importance"].items()},
            fit_loss=float(payload["fit_loss"]),
            importance_identifiable=bool(payload["importance_identifiable"]),
        )


def slalom_predict(model: SlalomModel, tokens) -> float:
    """Score a token sequence with the surrogate's mixing rule."""
    tokens = list(tokens)
    if not tokens:
        raise ValueError("cannot score an empty sequence")
    for token in tokens:
        if token not in model.value:
            raise KeyError(f"token not fitted: {token!r}")
    s = np.array([model.importance[t] for t in tokens])
    v = np.array([model.value[t] for t in tokens])
    s = s - s.max()
    weights = np.exp(s)
    weights /= weights.sum()
    return float(weights @ v)


class SlalomPredictor:
    """Adapter that lets a fitted surrogate stand in as a predictor."""

    def __init__(self, model: SlalomModel, config: TokenizerConfig = DEFAULT_TOKENIZER):
        self.model = model
        self.config = config

    def predict_log_odds(self, text: str) -> float:
        return slalom_predict(self.model, tokenize(text, self.config))


def _pair_targets(predictor: Predictor, vocab: tuple[str, ...], pairs: np.ndarray) -> np.ndarray:
    """Query the predictor once per distinct ordered pair, then broadcast."""
    flat = pairs[:, 0] * len(vocab) + pairs[:, 1]
    distinct, inverse = np.unique(flat, return_inverse=True)
    targets = np.empty(len(distinct))
    for k, code in enumerate(distinct):
        i, j = divmod(int(code), len(vocab))
        targets[k] = predictor.predict_log_odds(f"{vocab[i]} {vocab[j]}")
    return targets[inverse]


def _pair_losses(v, s, left, right, y):
    sig = _sigmoid(s[left] - s[right])
    pred = sig * v[left] + (1.0 - sig) * v[right]
    return (pred - y) ** 2


def fit_slalom(
    predictor: Predictor,
    vocab,
    n_background: int = 100_000,
    seed: int = 0,
    config: SlalomFitConfig | None = None,
) -> SlalomModel:
    """Fit a surrogate to a predictor by regressing on random token pairs.

    Background pairs are ordered draws, uniform with replacement over the
    vocabulary. Values initialize from the predictor's score on each token
    doubled ("t t"), which the mixing rule maps to the value itself; raw
    importances start at zero. The reported loss is the mean squared error
    over the full background sample at the final parameters.
    """
    vocab = tuple(sorted(set(vocab)))
    if not vocab:
        raise ValueError("vocab must be non-empty")
    config = config or SlalomFitConfig()

    diag = np.array([predictor.predict_log_odds(f"{t} {t}") for t in vocab])
    if len(vocab) == 1:
        token = vocab[0]
        return SlalomModel(
            fitted_vocab=vocab,
            value={token: float(diag[0])},
            importance={token: 0.0},
            fit_loss=0.0,
            importance_identifiable=False,
        )

    rng = np.random.default_rng(seed)
    pairs = rng.integers(0, len(vocab), size=(n_background, 2))
    y = _pair_targets(predictor, vocab, pairs)

    v = diag.copy()
    s = np.zeros(len(vocab))
    left, right = pairs[:, 0], pairs[:, 1]
    for epoch in range(config.epochs):
        lr = config.lr * config.lr_decay**epoch
        order = rng.permutation(n_background)
        for start in range(0, n_background, config.batch_size):
            batch = order[start : start + config.batch_size]
            bl, br, by = left[batch], right[batch], y[batch]
            sig = _sigmoid(s[bl] - s[br])
            pred = sig * v[bl] + (1.0 - sig) * v[br]
            resid = 2.0 * (pred - by) / len(batch)

            grad_v = np.zeros_like(v)
            np.add.at(grad_v, bl, resid * sig)
            np.add.at(grad_v, br, resid * (1.0 - sig))
            swing = resid * sig * (1.0 - sig) * (v[bl] - v[br])
            grad_s = np.zeros_like(s)
            np.add.at(grad_s, bl, swing)
            np.add.at(grad_s, br, -swing)

            v -= lr * grad_v
            s -= lr * grad_s
        epoch_loss = float(np.mean(_pair_losses(v, s, left, right, y)))
        if not math.isfinite(epoch_loss):
            raise RuntimeError("slalom diverged; reduce lr")

    fit_loss = float(np.mean(_pair_losses(v, s, left, right, y)))
    return SlalomModel(
        fitted_vocab=vocab,
        value={t: float(v[i]) for i, t in enumerate(vocab)},
        importance={t: float(s[i]) for i, t in enumerate(vocab)},
        fit_loss=fit_loss,
    )
