"""Shapley-value attribution over tokens.

The value of a token coalition is the predictor's log-odds on the
subsequence of retained tokens, joined in their original order. Dropped
tokens are simply removed; nothing is substituted in their place. Two
estimators share that value function: exact subset enumeration for short
texts, and permutation sampling for everything else. The exact variant
doubles as the test oracle for the sampler.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..corpus import DEFAULT_TOKENIZER, TokenizerConfig, tokenize
from ..models import Predictor

EXACT_TOKEN_LIMIT = 12


@dataclass(frozen=True)
class ShapReport:
    """Per-token attributions for one text under one predictor.

    ``phi[i]`` estimates how much ``tokens[i]`` moves the log-odds, averaged
    over the orders in which tokens could be revealed. ``std_errors`` are per
    token; the exact estimator reports zeros there. ``n_samples`` counts
    permutations for the sampler and coalition evaluations for the exact
    enumerator.
    """

    tokens: tuple[str, ...]
    phi: tuple[float, ...]
    std_errors: tuple[float, ...]
    baseline_value: float
    full_value: float
    n_samples: int
    seed: int

    def __post_init__(self):
        if len(self.phi) != len(self.tokens):
            raise ValueError("phi must align with tokens")
        if len(self.std_errors) != len(self.tokens):
            raise ValueError("std_errors must align with tokens")
        if not all(math.isfinite(p) for p in self.phi):
            raise ValueError("phi must be finite")

    @property
    def residual(self) -> float:
        """Gap between full-minus-baseline and the attribution total."""
        return (self.full_value - self.baseline_value) - sum(self.phi)

    def to_dict(self) -> dict:
        return asdict(self) | {
            "tokens": list(self.tokens),
            "phi": list(self.phi),
            "std_errors": list(self.std_errors),
        }


class _CoalitionValue:
    """Memoized value function over bitmasks of retained token positions."""

    def __init__(self, predictor: Predictor, tokens: tuple[str, ...]):
        self.predictor = predictor
        self.tokens = tokens
        self.cache: dict[int, float] = {}

    def __call__(self, mask: int, token_index: int | None = None) -> float:
        value = self.cache.get(mask)
        if value is None:
            text = " ".join(
                tok for i, tok in enumerate(self.tokens) if mask >> i & 1
            )
            try:
                value = float(self.predictor.predict_log_odds(text))
            except Exception as exc:
                where = (
                    "the baseline coalition"
                    if token_index is None
                    else f"token {token_index} ({self.tokens[token_index]!r})"
                )
                raise RuntimeError(f"predictor failed while scoring {where}") from exc
            if not math.isfinite(value):
                raise RuntimeError(f"predictor returned non-finite value for mask {mask}")
            self.cache[mask] = value
        return value


def _prepare(text: str, config: TokenizerConfig) -> tuple[str, ...]:
    tokens = tuple(tokenize(text, config))
    if not tokens:
        raise ValueError("cannot attribute a text with no tokens")
    return tokens


def shap_sample(
    predictor: Predictor,
    text: str,
    n_samples: int = 2000,
    seed: int = 0,
    config: TokenizerConfig = DEFAULT_TOKENIZER,
) -> ShapReport:
    """Estimate Shapley values by sampling token permutations.

    Each sampled permutation reveals tokens one at a time and credits every
    token with its marginal change in log-odds. Estimates are reported raw:
    the efficiency identity holds up to sampling noise and is not enforced
    by post-hoc rescaling. Coalition values are memoized, so repeated masks
    cost one predictor call regardless of ``n_samples``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    tokens = _prepare(text, config)
    n = len(tokens)
    value = _CoalitionValue(predictor, tokens)
    rng = np.random.default_rng(seed)

    baseline = value(0)
    full = value((1 << n) - 1)
    sums = np.zeros(n)
    squares = np.zeros(n)
    for _ in range(n_samples):
        order = rng.permutation(n)
        mask = 0
        previous = baseline
        for raw in order:
            idx = int(raw)
            mask |= 1 << idx
            current = value(mask, idx)
            marginal = current - previous
            sums[idx] += marginal
            squares[idx] += marginal * marginal
            previous = current

    phi = sums / n_samples
    if n_samples > 1:
        variance = (squares - n_samples * phi**2) / (n_samples - 1)
        std_errors = np.sqrt(np.maximum(variance, 0.0) / n_samples)
    else:
        std_errors = np.zeros(n)
    return ShapReport(
        tokens=tokens,
        phi=tuple(float(p) for p in phi),
        std_errors=tuple(float(s) for s in std_errors),
        baseline_value=baseline,
        full_value=full,
        n_samples=n_samples,
        seed=seed,
    )


def exact_shap(
    predictor: Predictor,
    text: str,
    config: TokenizerConfig = DEFAULT_TOKENIZER,
) -> ShapReport:
    """Compute exact Shapley values by evaluating every token subset.

    Feasible only for short texts: the coalition count doubles per token, so
    inputs are capped at ``EXACT_TOKEN_LIMIT`` tokens (4096 evaluations).
    """
    tokens = _prepare(text, config)
    n = len(tokens)
    if n > EXACT_TOKEN_LIMIT:
        raise ValueError("exact oracle limit exceeded")
    value = _CoalitionValue(predictor, tokens)

    values = [value(mask) for mask in range(1 << n)]
    factorial = [math.factorial(k) for k in range(n + 1)]
    # weight of a coalition of size s when adding one more token
    weights = [factorial[s] * factorial[n - s - 1] / factorial[n] for s in range(n)]

    phi = [0.0] * n
    for mask in range((1 << n) - 1):
        w = weights[int.bit_count(mask)]
        for i in range(n):
            if mask >> i & 1:
                continue
            phi[i] += w * (values[mask | (1 << i)] - values[mask])

    return ShapReport(
        tokens=tokens,
        phi=tuple(phi),
        std_errors=(0.0,) * n,
        baseline_value=values[0],
        full_value=values[-1],
        n_samples=1 << n,
        seed=0,
    )
