"""Seeded random hyperparameter search over simple parameter domains.

The search samples parameter settings from the space, trains each candidate
on the same inner training split, scores it on the inner validation split,
and returns the best setting with the full trial log. Everything is
reproducible from the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from tracekit.corpus import Corpus, stratified_holdout
from tracekit.evaluation.crossval import Trainer, _map_jobs, score_predictor

__all__ = [
    "Choice",
    "IntRange",
    "LogUniform",
    "SearchSpace",
    "Trial",
    "SearchResult",
    "hyperparameter_search",
]


@dataclass(frozen=True)
class Choice:
    """Categorical domain: uniform over the listed values."""

    values: tuple

    def sample(self, rng: np.random.Generator):
        return self.values[int(rng.integers(0, len(self.values)))]


@dataclass(frozen=True)
class IntRange:
    """Uniform integer domain over [lo, hi] inclusive."""

    lo: int
    hi: int

    def __post_init__(self) -> None:
        if self.hi < self.lo:
            raise ValueError("hi must be >= lo")

    def sample(self, rng: np.random.Generator) -> int:
        return int(rng.integers(self.lo, self.hi + 1))


@dataclass(frozen=True)
class LogUniform:
    """Log-uniform real domain over [lo, hi], lo > 0."""

    lo: float
    hi: float

    def __post_init__(self) -> None:
        if self.lo <= 0.0 or self.hi <= self.lo:
            raise ValueError("need 0 < lo < hi")

    def sample(self, rng: np.random.Generator) -> float:
        return float(math.exp(rng.uniform(math.log(self.lo), math.log(self.hi))))


@dataclass(frozen=True)
class SearchSpace:
    params: Mapping[str, Choice | IntRange | LogUniform]
    budget: int = 50
    objective: str = "auroc"

    def sample(self, rng: np.random.Generator) -> dict:
        # parameter order is fixed by name so sampling is seed-stable
        return {name: self.params[name].sample(rng) for name in sorted(self.params)}


@dataclass(frozen=True)
class Trial:
    index: int
    params: dict
    score: float | None
    error: str | None = None

    def to_dict(self) -> dict:
        return {"index": self.index, "params": self.params, "score": self.score, "error": self.error}


@dataclass(frozen=True)
class SearchResult:
    best_params: dict
    best_score: float
    best_index: int
    objective: str
    trials: list[Trial]


def hyperparameter_search(
    trainer_factory: Callable[[dict], Trainer],
    space: SearchSpace,
    corpus: Corpus,
    seed: int = 0,
    inner_test_fraction: float = 0.25,
    jobs: int = 1,
) -> SearchResult:
    """Random search; returns the best setting by validation objective.

    The inner split is drawn once from the seed and shared by all trials so
    scores are comparable. Failed trials are logged with their cause; if all
    of them fail, the whole search raises.
    """
    if space.budget < 1:
        raise ValueError("budget must be >= 1")
    children = np.random.SeedSequence(seed).spawn(space.budget + 2)
    sample_rng = np.random.default_rng(children[0])
    split_seed = int(children[1].generate_state(1)[0])
    trial_seeds = [int(c.generate_state(1)[0]) for c in children[2:]]
    train_idx, val_idx = stratified_holdout(
        corpus, test_fraction=inner_test_fraction, seed=split_seed
    )
    train_part, val_part = corpus.subset(train_idx), corpus.subset(val_idx)
    settings = [space.sample(sample_rng) for _ in range(space.budget)]

    def run_trial(arg: tuple[int, dict]) -> Trial:
        index, params = arg
        try:
            trainer = trainer_factory(params)
            predictor = trainer(train_part, trial_seeds[index])
            metrics = score_predictor(predictor, val_part)
            if space.objective not in metrics:
                raise ValueError(f"unknown objective {space.objective!r}")
            return Trial(index=index, params=params, score=metrics[space.objective])
        except Exception as exc:
            return Trial(index=index, params=params, score=None, error=str(exc))

    trials = _map_jobs(run_trial, list(enumerate(settings)), jobs)
    succeeded = [t for t in trials if t.score is not None]
    if not succeeded:
        causes = "; ".join(f"trial {t.index}: {t.error}" for t in trials[:10])
        raise RuntimeError(f"all trials failed: {causes}")
    best = max(succeeded, key=lambda t: (t.score, -t.index))
    return SearchResult(
        best_params=best.params,
        best_score=best.score,
        best_index=best.index,
        objective=space.objective,
        trials=trials,
    )
