"""Corpus handling: segments, tokenization, vocabulary, features, splits.

A corpus is an ordered collection of labeled text segments. Long source
documents are split into bounded-length segments that remember their parent,
so document-level results can be reassembled exactly. All randomness is
driven by explicit integer seeds.
"""

from __future__ import annotations

import json
import math
import re
import unicodedata
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

__all__ = [
    "TokenizerConfig",
    "DEFAULT_TOKENIZER",
    "Segment",
    "Corpus",
    "Vocabulary",
    "FeatureVector",
    "GeneratorConfig",
    "tokenize",
    "segment_documents",
    "build_vocab",
    "tfidf_vectorize",
    "tfidf_matrix",
    "extract_ngrams",
    "stratified_splits",
    "stratified_holdout",
    "synthesize_corpus",
    "read_jsonl",
    "write_jsonl",
]

_DEFAULT_URL_PATTERN = r"(?:https?://|www\.)\S+"

# Alphanumeric runs; underscore is a separator like any other punctuation.
_RUN_RE = re.compile(r"[^\W_]+", re.UNICODE)
_WORD_RE = re.compile(r"\S+")


@dataclass(frozen=True)
class TokenizerConfig:
    """Tokenization scheme: URL stripping followed by alphanumeric runs."""

    url_pattern: str = _DEFAULT_URL_PATTERN

    @property
    def url_re(self) -> re.Pattern[str]:
        return re.compile(self.url_pattern, re.IGNORECASE)


DEFAULT_TOKENIZER = TokenizerConfig()


def tokenize(text: str, config: TokenizerConfig = DEFAULT_TOKENIZER) -> list[str]:
    """Split text into lowercase NFKC-normalized alphanumeric tokens.

    URLs are removed before splitting. The function is deterministic and
    idempotent on its own output joined by single spaces.
    """
    stripped = config.url_re.sub(" ", text)
    tokens: list[str] = []
    for match in _RUN_RE.finditer(stripped):
        norm = unicodedata.normalize("NFKC", match.group()).lower()
        if _RUN_RE.fullmatch(norm):
            tokens.append(norm)
        else:
            # NFKC can expand a character into a sequence containing
            # separators (e.g. vulgar fractions); re-split those.
            tokens.extend(_RUN_RE.findall(norm))
    return tokens


@dataclass(frozen=True)
class Segment:
    """One unit of text with an optional binary label and a domain tag.

    ``parent_id`` is set when the segment was produced by splitting a longer
    document. ``extra`` carries unknown JSONL keys through a read/write
    round-trip untouched.
    """

    id: str
    text: str
    label: int | None
    domain: str
    parent_id: str | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("segment id must be non-empty")
        if not unicodedata.normalize("NFKC", self.text).strip():
            raise ValueError(f"segment {self.id!r}: text empty after normalization")
        if self.label is not None and self.label not in (0, 1):
            raise ValueError(f"segment {self.id!r}: label must be 0, 1 or None")
        if not self.domain:
            raise ValueError(f"segment {self.id!r}: domain tag must be non-empty")
        if self.parent_id == self.id:
            raise ValueError(f"segment {self.id!r}: parent_id equals its own id")


class Corpus:
    """Ordered, deterministic collection of segments with unique ids."""

    def __init__(self, segments: Iterable[Segment], domain: str | None = None):
        self._segments: tuple[Segment, ...] = tuple(segments)
        seen: set[str] = set()
        for seg in self._segments:
            if seg.id in seen:
                raise ValueError(f"duplicate segment id {seg.id!r}")
            seen.add(seg.id)
        if domain is None:
            domains = {seg.domain for seg in self._segments}
            domain = domains.pop() if len(domains) == 1 else "mixed"
        self.domain = domain

    def __len__(self) -> int:
        return len(self._segments)

    def __iter__(self) -> Iterator[Segment]:
        return iter(self._segments)

    def __getitem__(self, index: int) -> Segment:
        return self._segments[index]

    @property
    def segments(self) -> tuple[Segment, ...]:
        return self._segments

    def ids(self) -> list[str]:
        return [seg.id for seg in self._segments]

    def texts(self) -> list[str]:
        return [seg.text for seg in self._segments]

    def labels(self) -> list[int | None]:
        return [seg.label for seg in self._segments]

    def balance(self) -> float:
        """Fraction of labeled segments that carry label 1."""
        labeled = [seg.label for seg in self._segments if seg.label is not None]
        if not labeled:
            raise ValueError("corpus has no labeled segments")
        return sum(labeled) / len(labeled)

    def subset(self, indices: Sequence[int]) -> "Corpus":
        return Corpus([self._segments[i] for i in indices], domain=self.domain)

    @staticmethod
    def concat(parts: Sequence["Corpus"], domain: str | None = None) -> "Corpus":
        segs: list[Segment] = []
        for part in parts:
            segs.extend(part.segments)
        return Corpus(segs, domain=domain)


_JSONL_KEYS = ("id", "text", "label", "domain", "parent_id")


def _segment_from_record(record: dict) -> Segment:
    extra = {k: v for k, v in record.items() if k not in _JSONL_KEYS}
    return Segment(
        id=str(record["id"]),
        text=record["text"],
        label=record.get("label"),
        domain=record.get("domain", "mixed"),
        parent_id=record.get("parent_id"),
        extra=extra,
    )


def read_jsonl(path: str) -> Corpus:
    """Read a corpus from newline-delimited JSON.

    Raises ValueError citing the 1-based line number of the first malformed
    line.
    """
    segments: list[Segment] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                if not isinstance(record, dict):
                    raise ValueError("record is not an object")
                segments.append(_segment_from_record(record))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}: malformed record at line {lineno}: {exc}") from exc
    return Corpus(segments)


def write_jsonl(corpus: Corpus, path: str) -> None:
    """Write a corpus as newline-delimited JSON, preserving unknown keys."""
    with open(path, "w", encoding="utf-8") as fh:
        for seg in corpus:
            record = {
                "id": seg.id,
                "text": seg.text,
                "label": seg.label,
                "domain": seg.domain,
                "parent_id": seg.parent_id,
            }
            record.update(seg.extra)
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")


def _word_token_count(word: str, config: TokenizerConfig) -> int:
    return len(tokenize(word, config))


def _split_spans(text: str, max_tokens: int, config: TokenizerConfig) -> list[tuple[int, int]]:
    """Character spans of the pieces a too-long text is cut into.

    Units are whitespace-delimited words; a cut between words consumes the
    whitespace run separating them. A word holding more tokens than
    ``max_tokens`` is cut between its alphanumeric runs at exact offsets, so
    nothing but cut whitespace is ever lost.
    """
    words = [(m.start(), m.end()) for m in _WORD_RE.finditer(text)]
    units: list[tuple[int, int, int]] = []  # (start, end, token_count)
    for start, end in words:
        word = text[start:end]
        count = _word_token_count(word, config)
        if count <= max_tokens:
            units.append((start, end, count))
            continue
        # Oversized word: make one unit per alphanumeric run, with each
        # unit's span running up to the start of the next run so the pieces
        # tile the word exactly.
        masked = config.url_re.sub(lambda m: " " * len(m.group()), word)
        runs = [(m.start(), m.end()) for m in _RUN_RE.finditer(masked)]
        for k, (rs, _) in enumerate(runs):
            unit_start = start if k == 0 else start + rs
            unit_end = start + runs[k + 1][0] if k + 1 < len(runs) else end
            token_count = _word_token_count(text[unit_start:unit_end], config)
            units.append((unit_start, unit_end, token_count))

    spans: list[tuple[int, int]] = []
    group_start: int | None = None
    group_end = 0
    group_count = 0
    for start, end, count in units:
        if group_start is not None and group_count + count > max_tokens:
            spans.append((group_start, group_end))
            group_start = None
            group_count = 0
        if group_start is None:
            group_start = start
        group_end = end
        group_count += count
    if group_start is not None:
        spans.append((group_start, group_end))
    if not spans:
        return [(0, len(text))]
    # Keep the document's leading and trailing whitespace attached.
    spans[0] = (0, spans[0][1])
    spans[-1] = (spans[-1][0], len(text))
    # Adjacent units inside an oversized word tile exactly, so consecutive
    # spans can only be separated by whitespace runs.
    return spans


def segment_documents(
    corpus: Corpus,
    max_tokens: int = 512,
    config: TokenizerConfig = DEFAULT_TOKENIZER,
) -> Corpus:
    """Split each over-long segment into pieces of at most ``max_tokens``.

    Pieces keep the parent's label and domain and carry ``parent_id``;
    concatenating a parent's pieces in order restores the parent text up to
    one whitespace run per cut, and restores its token sequence exactly.
    Segments within the limit pass through unchanged.
    """
    if max_tokens < 1:
        raise ValueError("max_tokens must be >= 1")
    out: list[Segment] = []
    for seg in corpus:
        if _word_token_count(seg.text, config) <= max_tokens:
            out.append(seg)
            continue
        spans = _split_spans(seg.text, max_tokens, config)
        for k, (start, end) in enumerate(spans):
            out.append(
                Segment(
                    id=f"{seg.id}/{k}",
                    text=seg.text[start:end],
                    label=seg.label,
                    domain=seg.domain,
                    parent_id=seg.id,
                    extra=dict(seg.extra),
                )
            )
    return Corpus(out, domain=corpus.domain)


@dataclass(frozen=True)
class Vocabulary:
    """Dense token index in lexicographic order with document frequencies."""

    tokens: tuple[str, ...]
    doc_freq: tuple[int, ...]
    n_docs: int
    index: dict[str, int] = field(repr=False, compare=False, default_factory=dict)

    def __post_init__(self) -> None:
        if not self.index:
            object.__setattr__(self, "index", {t: i for i, t in enumerate(self.tokens)})
        if list(self.tokens) != sorted(self.tokens):
            raise ValueError("vocabulary must be lexicographically ordered")
        if len(self.tokens) != len(set(self.tokens)):
            raise ValueError("vocabulary tokens must be unique")
        if len(self.doc_freq) != len(self.tokens):
            raise ValueError("doc_freq length mismatch")
        for t, df in zip(self.tokens, self.doc_freq):
            if not 1 <= df <= self.n_docs:
                raise ValueError(f"token {t!r}: doc frequency {df} out of range")

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index


def extract_ngrams(tokens: Sequence[str], n_range: tuple[int, int]) -> list[str]:
    """All contiguous n-grams for n in [lo, hi], ordered by (n, position).

    N-gram units are the constituent tokens joined by underscores.
    """
    lo, hi = n_range
    if lo < 1 or hi < lo:
        raise ValueError(f"invalid n-gram range {n_range!r}")
    grams: list[str] = []
    for n in range(lo, hi + 1):
        for i in range(len(tokens) - n + 1):
            grams.append("_".join(tokens[i : i + n]))
    return grams


def build_vocab(
    corpus: Corpus,
    min_df: int = 1,
    config: TokenizerConfig = DEFAULT_TOKENIZER,
    n_range: tuple[int, int] | None = None,
) -> Vocabulary:
    """Build a vocabulary over tokens (or n-grams) with df >= min_df."""
    if len(corpus) == 0:
        raise ValueError("empty corpus")
    df: dict[str, int] = {}
    for seg in corpus:
        units = tokenize(seg.text, config)
        if n_range is not None:
            units = extract_ngrams(units, n_range)
        for unit in set(units):
            df[unit] = df.get(unit, 0) + 1
    kept = sorted(t for t, c in df.items() if c >= min_df)
    return Vocabulary(
        tokens=tuple(kept),
        doc_freq=tuple(df[t] for t in kept),
        n_docs=len(corpus),
    )


@dataclass(frozen=True)
class FeatureVector:
    """Sparse vector with strictly increasing indices."""

    indices: tuple[int, ...]
    weights: tuple[float, ...]
    dim: int

    def __post_init__(self) -> None:
        if len(self.indices) != len(self.weights):
            raise ValueError("indices and weights length mismatch")
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise ValueError("indices must be strictly increasing")
        if self.indices and (self.indices[0] < 0 or self.indices[-1] >= self.dim):
            raise ValueError("index out of range")
        if not all(math.isfinite(w) for w in self.weights):
            raise ValueError("weights must be finite")

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.dim)
        if self.indices:
            dense[list(self.indices)] = self.weights
        return dense


def _idf(vocab: Vocabulary) -> np.ndarray:
    df = np.asarray(vocab.doc_freq, dtype=float)
    return np.log((1.0 + vocab.n_docs) / (1.0 + df)) + 1.0


def tfidf_vectorize(tokens: Sequence[str], vocab: Vocabulary) -> FeatureVector:
    """TF-IDF weights for one unit sequence, L2-normalized.

    tf is the raw in-document count; idf(t) = ln((1+N)/(1+df(t))) + 1.
    Units outside the vocabulary contribute nothing.
    """
    counts: dict[int, int] = {}
    for unit in tokens:
        idx = vocab.index.get(unit)
        if idx is not None:
            counts[idx] = counts.get(idx, 0) + 1
    if not counts:
        return FeatureVector(indices=(), weights=(), dim=len(vocab))
    idf = _idf(vocab)
    indices = sorted(counts)
    raw = np.array([counts[i] * idf[i] for i in indices])
    norm = float(np.linalg.norm(raw))
    if norm > 0.0:
        raw = raw / norm
    return FeatureVector(indices=tuple(indices), weights=tuple(raw.tolist()), dim=len(vocab))


def tfidf_matrix(
    corpus: Corpus,
    vocab: Vocabulary,
    config: TokenizerConfig = DEFAULT_TOKENIZER,
    n_range: tuple[int, int] | None = None,
) -> np.ndarray:
    """Dense (n_segments, |V|) TF-IDF matrix for model training."""
    X = np.zeros((len(corpus), len(vocab)))
    for row, seg in enumerate(corpus):
        units = tokenize(seg.text, config)
        if n_range is not None:
            units = extract_ngrams(units, n_range)
        fv = tfidf_vectorize(units, vocab)
        if fv.indices:
            X[row, list(fv.indices)] = fv.weights
    return X


def _require_stratifiable(corpus: Corpus) -> tuple[list[int], list[int]]:
    pos = [i for i, seg in enumerate(corpus) if seg.label == 1]
    neg = [i for i, seg in enumerate(corpus) if seg.label == 0]
    unlabeled = len(corpus) - len(pos) - len(neg)
    if unlabeled:
        raise ValueError(f"cannot stratify: {unlabeled} segments are unlabeled")
    if not pos or not neg:
        raise ValueError("cannot stratify: need both classes present")
    return pos, neg


def stratified_splits(
    corpus: Corpus, folds: int = 5, seed: int = 0
) -> list[tuple[list[int], list[int]]]:
    """Deterministic stratified k-fold split.

    Returns (train_indices, test_indices) pairs; each test fold's positive
    count is within one sample of the ideal proportional share.
    """
    if folds < 2:
        raise ValueError("folds must be >= 2")
    pos, neg = _require_stratifiable(corpus)
    rng = np.random.default_rng(seed)
    pos = [pos[i] for i in rng.permutation(len(pos))]
    neg = [neg[i] for i in rng.permutation(len(neg))]
    test_folds: list[list[int]] = [[] for _ in range(folds)]
    for k, idx in enumerate(pos):
        test_folds[k % folds].append(idx)
    for k, idx in enumerate(neg):
        test_folds[k % folds].append(idx)
    splits = []
    for fold in test_folds:
        test = sorted(fold)
        test_set = set(test)
        train = [i for i in range(len(corpus)) if i not in test_set]
        splits.append((train, test))
    return splits


def stratified_holdout(
    corpus: Corpus, test_fraction: float = 0.2, seed: int = 0
) -> tuple[list[int], list[int]]:
    """One deterministic stratified train/test split."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must be in (0, 1)")
    pos, neg = _require_stratifiable(corpus)
    rng = np.random.default_rng(seed)
    test: list[int] = []
    for group in (pos, neg):
        shuffled = [group[i] for i in rng.permutation(len(group))]
        n_test = max(1, round(len(group) * test_fraction))
        if n_test >= len(group):
            n_test = len(group) - 1
        test.extend(shuffled[:n_test])
    test = sorted(test)
    test_set = set(test)
    train = [i for i in range(len(corpus)) if i not in test_set]
    return train, test


@dataclass(frozen=True)
class GeneratorConfig:
    """Shape of a synthetic corpus with planted signal tokens.

    Positive segments contain at least one signal token; negative segments
    contain none. Everything else is filler drawn from a disjoint noise
    vocabulary.
    """

    n_docs: int
    positive_rate: float
    signal_tokens: tuple[str, ...]
    noise_vocab_size: int = 50
    doc_length: int = 12
    domain: str = "synthetic"

    def __post_init__(self) -> None:
        if self.n_docs < 1:
            raise ValueError("n_docs must be >= 1")
        if not 0.0 < self.positive_rate < 1.0:
            raise ValueError("positive_rate must be in (0, 1)")
        if not self.signal_tokens:
            raise ValueError("need at least one signal token")
        if self.noise_vocab_size < 1:
            raise ValueError("noise_vocab_size must be >= 1")
        if self.doc_length < 1:
            raise ValueError("doc_length must be >= 1")


def synthesize_corpus(config: GeneratorConfig, seed: int = 0) -> Corpus:
    """Generate a deterministic synthetic corpus from a seed."""
    noise_vocab = [f"filler{i:04d}" for i in range(config.noise_vocab_size)]
    overlap = set(noise_vocab) & set(config.signal_tokens)
    if overlap:
        raise ValueError(f"signal tokens collide with noise vocabulary: {sorted(overlap)}")
    rng = np.random.default_rng(seed)
    segments: list[Segment] = []
    for i in range(config.n_docs):
        label = int(rng.random() < config.positive_rate)
        words = [noise_vocab[j] for j in rng.integers(0, config.noise_vocab_size, config.doc_length)]
        if label == 1:
            n_signal = 1 + int(rng.integers(0, min(3, config.doc_length)))
            positions = rng.choice(config.doc_length, size=n_signal, replace=False)
            for pos in positions:
                words[pos] = config.signal_tokens[int(rng.integers(0, len(config.signal_tokens)))]
        segments.append(
            Segment(
                id=f"{config.domain}-{i:05d}",
                text=" ".join(words),
                label=label,
                domain=config.domain,
            )
        )
    return Corpus(segments, domain=config.domain)


def reassemble(corpus: Corpus) -> dict[str, str]:
    """Join split segments back into parent texts, keyed by parent id.

    Pieces are joined with a single space, matching the whitespace run
    consumed at each cut.
    """
    groups: dict[str, list[Segment]] = {}
    for seg in corpus:
        if seg.parent_id is not None:
            groups.setdefault(seg.parent_id, []).append(seg)
    out: dict[str, str] = {}
    for parent_id, segs in groups.items():
        segs.sort(key=lambda s: int(s.id.rsplit("/", 1)[1]))
        out[parent_id] = " ".join(s.text for s in segs)
    return out
