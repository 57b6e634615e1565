"""Repeated-split evaluation protocol and cross-domain transfer grids.

A trainer is any callable ``(corpus, seed) -> Predictor``. Each run derives
its own seed from the master seed, trains on the run's training split, and
scores the held-out split; reports carry per-metric mean and standard error
(sd / sqrt(runs)) over the runs.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from tracekit.corpus import Corpus, stratified_holdout, stratified_splits
from tracekit.evaluation.metrics import accuracy, auroc, binary_f1, precision, recall
from tracekit.models import Predictor

__all__ = [
    "MetricValue",
    "MetricsReport",
    "CrossDomainMatrix",
    "cross_validate",
    "cross_domain",
]

Trainer = Callable[[Corpus, int], Predictor]

METRIC_NAMES = ("auroc", "f1_binary", "accuracy", "precision", "recall")


@dataclass(frozen=True)
class MetricValue:
    """Mean and standard error of one metric over evaluation runs."""

    mean: float
    std_error: float
    values: tuple[float, ...]

    @property
    def n_runs(self) -> int:
        return len(self.values)

    def format_cell(self) -> str:
        return f"{self.mean:.2f} ± {self.std_error:.2f}"


@dataclass(frozen=True)
class MetricsReport:
    """All metrics for one (dataset, model) evaluation."""

    dataset: str
    model: str
    metrics: dict[str, MetricValue]

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "model": self.model,
            "metrics": {
                name: {
                    "mean": mv.mean,
                    "std_error": mv.std_error,
                    "n_runs": mv.n_runs,
                    "values": list(mv.values),
                }
                for name, mv in sorted(self.metrics.items())
            },
        }


def _aggregate(per_run: list[dict[str, float]], dataset: str, model: str) -> MetricsReport:
    metrics: dict[str, MetricValue] = {}
    for name in METRIC_NAMES:
        values = tuple(run[name] for run in per_run)
        mean = float(np.mean(values))
        if len(values) > 1:
            se = float(np.std(values, ddof=1) / math.sqrt(len(values)))
        else:
            se = 0.0
        metrics[name] = MetricValue(mean=mean, std_error=se, values=values)
    return MetricsReport(dataset=dataset, model=model, metrics=metrics)


def score_predictor(predictor: Predictor, corpus: Corpus) -> dict[str, float]:
    """All metrics of one predictor on one labeled corpus."""
    labels = []
    scores = []
    for seg in corpus:
        if seg.label is None:
            raise ValueError(f"segment {seg.id!r} is unlabeled")
        labels.append(seg.label)
        scores.append(predictor.predict_log_odds(seg.text))
    preds = [1 if s > 0.0 else 0 for s in scores]
    return {
        "auroc": auroc(scores, labels),
        "f1_binary": binary_f1(preds, labels),
        "accuracy": accuracy(preds, labels),
        "precision": precision(preds, labels),
        "recall": recall(preds, labels),
    }


def _run_seeds(seed: int, n: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def _map_jobs(fn, items: Sequence, jobs: int) -> list:
    if jobs <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def cross_validate(
    trainer: Trainer,
    corpus: Corpus,
    folds: int = 5,
    seed: int = 0,
    mode: str = "shuffle",
    test_fraction: float = 0.2,
    dataset: str | None = None,
    model: str = "model",
    jobs: int = 1,
) -> MetricsReport:
    """Evaluate a trainer over repeated held-out splits.

    mode="shuffle" draws ``folds`` independent stratified splits;
    mode="kfold" uses stratified cross-validation folds instead.
    """
    if mode == "shuffle":
        seeds = _run_seeds(seed, folds)
        splits = [
            stratified_holdout(corpus, test_fraction=test_fraction, seed=s) for s in seeds
        ]
    elif mode == "kfold":
        splits = stratified_splits(corpus, folds=folds, seed=seed)
        seeds = _run_seeds(seed, folds)
    else:
        raise ValueError(f"unknown mode {mode!r}")

    def run_one(arg: tuple[int, tuple[list[int], list[int]]]) -> dict[str, float]:
        k, (train_idx, test_idx) = arg
        try:
            predictor = trainer(corpus.subset(train_idx), seeds[k])
            return score_predictor(predictor, corpus.subset(test_idx))
        except Exception as exc:
            raise RuntimeError(f"evaluation run {k} failed: {exc}") from exc

    per_run = _map_jobs(run_one, list(enumerate(splits)), jobs)
    return _aggregate(per_run, dataset=dataset or corpus.domain, model=model)


COMBINED = "all"


@dataclass(frozen=True)
class CrossDomainMatrix:
    """Train-domain by test-domain grid of metric reports."""

    train_domains: tuple[str, ...]
    test_domains: tuple[str, ...]
    cells: dict[tuple[str, str], MetricsReport]
    primary_metric: str = "auroc"

    def cell(self, train: str, test: str) -> MetricsReport:
        return self.cells[(train, test)]

    def primary(self, train: str, test: str) -> MetricValue:
        return self.cells[(train, test)].metrics[self.primary_metric]

    def as_rows(self) -> list[dict]:
        rows = []
        for train in self.train_domains:
            for test in self.test_domains:
                report = self.cells[(train, test)]
                for name in METRIC_NAMES:
                    mv = report.metrics[name]
                    rows.append(
                        {
                            "train_domain": train,
                            "test_domain": test,
                            "metric": name,
                            "mean": mv.mean,
                            "std_error": mv.std_error,
                            "n_runs": mv.n_runs,
                        }
                    )
        return rows

    def to_dict(self) -> dict:
        return {
            "train_domains": list(self.train_domains),
            "test_domains": list(self.test_domains),
            "primary_metric": self.primary_metric,
            "cells": {
                f"{train}->{test}": self.cells[(train, test)].to_dict()
                for train in self.train_domains
                for test in self.test_domains
            },
        }


def cross_domain(
    trainers: Trainer | Mapping[str, Trainer],
    corpora: Mapping[str, Corpus] | Sequence[tuple[str, Corpus]],
    include_combined: bool = True,
    seed: int = 0,
    runs: int = 3,
    test_fraction: float = 0.2,
    model: str = "model",
    jobs: int = 1,
) -> CrossDomainMatrix:
    """Train per domain (plus a combined pool) and test on every domain.

    Every cell's test split is held out before training, in-domain cells
    included; any id overlap between a cell's training data and its test
    split aborts the run.
    """
    if isinstance(corpora, Mapping):
        domain_items = list(corpora.items())
    else:
        domain_items = list(corpora)
    domains = [name for name, _ in domain_items]
    if len(set(domains)) != len(domains):
        raise ValueError("duplicate domain names")
    by_domain = dict(domain_items)
    train_rows = domains + ([COMBINED] if include_combined else [])

    def trainer_for(row: str) -> Trainer:
        if isinstance(trainers, Mapping):
            return trainers[row]
        return trainers

    run_seeds = _run_seeds(seed, runs)
    per_cell: dict[tuple[str, str], list[dict[str, float]]] = {
        (train, test): [] for train in train_rows for test in domains
    }
    for r, run_seed in enumerate(run_seeds):
        split_seeds = _run_seeds(run_seed, len(domains))
        train_parts: dict[str, Corpus] = {}
        test_parts: dict[str, Corpus] = {}
        for d_idx, name in enumerate(domains):
            train_idx, test_idx = stratified_holdout(
                by_domain[name], test_fraction=test_fraction, seed=split_seeds[d_idx]
            )
            train_parts[name] = by_domain[name].subset(train_idx)
            test_parts[name] = by_domain[name].subset(test_idx)

        def fit_row(row: str) -> Predictor:
            if row == COMBINED:
                pool = Corpus.concat([train_parts[d] for d in domains], domain=COMBINED)
            else:
                pool = train_parts[row]
            return trainer_for(row)(pool, run_seed)

        fitted = dict(zip(train_rows, _map_jobs(fit_row, train_rows, jobs)))
        for train_name in train_rows:
            train_ids = (
                set().union(*(train_parts[d].ids() for d in domains))
                if train_name == COMBINED
                else set(train_parts[train_name].ids())
            )
            for test_name in domains:
                overlap = train_ids & set(test_parts[test_name].ids())
                if overlap:
                    raise RuntimeError(
                        f"train/test overlap in cell {train_name}->{test_name}: "
                        f"{sorted(overlap)[:5]}"
                    )
                per_cell[(train_name, test_name)].append(
                    score_predictor(fitted[train_name], test_parts[test_name])
                )

    cells = {
        key: _aggregate(values, dataset=key[1], model=f"{model}@{key[0]}")
        for key, values in per_cell.items()
    }
    return CrossDomainMatrix(
        train_domains=tuple(train_rows),
        test_domains=tuple(domains),
        cells=cells,
    )
