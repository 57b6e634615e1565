"""Shared fixtures: a separable corpus, a tiny base, and a tuned checkpoint.

Everything is built locally and deterministically. The corpus is binary
with one planted signal token, so a working fine-tune separates the
held-out split near perfectly and a broken one cannot fake it.
"""

import json
from pathlib import Path

import numpy as np
import pytest

from hfbridge import finetune, init_base

NOISE_WORDS = ["calm", "day", "market", "quiet", "road", "the", "a"]
SIGNAL_WORD = "shrapnel"
PROBE_WORDS = ["quiet", "road", "the", "shelling", "started", "at", "dawn", "x", "a"]


def make_rows(n: int, seed: int) -> list[dict]:
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n):
        label = int(i % 2)
        tokens = list(rng.choice(NOISE_WORDS, size=6))
        if label:
            tokens[int(rng.integers(0, 6))] = SIGNAL_WORD
        rows.append(
            {
                "id": f"syn-{i:04d}",
                "text": " ".join(tokens),
                "label": label,
                "domain": "synthetic",
            }
        )
    return rows


@pytest.fixture(scope="session")
def corpus(tmp_path_factory) -> dict:
    rows = make_rows(200, seed=3)
    train, held_out = rows[:160], rows[160:]
    path = tmp_path_factory.mktemp("corpus") / "train.jsonl"
    path.write_text(
        "\n".join(json.dumps(r) for r in train) + "\n", encoding="utf-8"
    )
    return {"train_path": str(path), "held_out": held_out}


@pytest.fixture(scope="session")
def base_checkpoint(tmp_path_factory) -> str:
    words = sorted(set(NOISE_WORDS + [SIGNAL_WORD] + PROBE_WORDS))
    path = tmp_path_factory.mktemp("ckpt") / "base"
    return init_base(str(path), words, seed=0)


@pytest.fixture(scope="session")
def tuned_checkpoint(tmp_path_factory, base_checkpoint, corpus) -> str:
    out = tmp_path_factory.mktemp("ckpt") / "tuned"
    finetune(
        base_checkpoint,
        corpus["train_path"],
        str(out),
        lr=5e-3,
        epochs=8,
        seed=0,
    )
    return str(out)
