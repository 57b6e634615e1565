import sys
from pathlib import Path

import pytest

from tracekit.corpus import Corpus, GeneratorConfig, Segment, synthesize_corpus

TESTS_DIR = Path(__file__).resolve().parent

if str(TESTS_DIR) not in sys.path:
    sys.path.insert(0, str(TESTS_DIR))


@pytest.fixture
def toy_corpus() -> Corpus:
    return Corpus(
        [
            Segment("t1", "wounded wounded", 1, "synthetic"),
            Segment("t2", "calm", 0, "synthetic"),
        ]
    )


@pytest.fixture(scope="session")
def small_synthetic() -> Corpus:
    config = GeneratorConfig(
        n_docs=200,
        positive_rate=0.3,
        signal_tokens=("shrapnel", "ambush"),
        noise_vocab_size=40,
        doc_length=10,
    )
    return synthesize_corpus(config, seed=11)
