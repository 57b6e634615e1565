"""Concept discovery over a model's latent space.

A concept is a unit vector in the encoder's latent space. Documents are
scored against each concept through their snippets: slide a fixed-length
token window over the document, embed every window, and take the maximum
dot product per concept. A small linear head maps those concept scores back
to a class logit. Concepts and head are optimized jointly so that the
reconstruction agrees with the model's own predictions; how well it does so
on held-out text is the completeness score.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ..container import read_container, write_container
from ..corpus import DEFAULT_TOKENIZER, Corpus, TokenizerConfig, tokenize
from ..models import LatentPredictor, Predictor


@dataclass(frozen=True)
class Snippet:
    """A contiguous token window taken from one segment."""

    segment_id: str
    text: str
    position: int


@dataclass(frozen=True)
class SalientSnippet:
    """A snippet together with its activation on one concept."""

    segment_id: str
    text: str
    position: int
    score: float


@dataclass(frozen=True)
class SalienceReport:
    """Top activating snippets per concept, sorted by descending score."""

    per_concept: tuple[tuple[SalientSnippet, ...], ...]
    top_m: int
    shortfall: bool

    def to_dict(self) -> dict:
        return {
            "top_m": self.top_m,
            "shortfall": self.shortfall,
            "per_concept": [
                [
                    {
                        "segment_id": s.segment_id,
                        "text": s.text,
                        "position": s.position,
                        "score": s.score,
                    }
                    for s in snippets
                ]
                for snippets in self.per_concept
            ],
        }


@dataclass(frozen=True)
class ConceptConfig:
    """Optimizer settings for :func:`discover_concepts`.

    Adam with a per-epoch learning-rate schedule; epochs beyond the
    schedule reuse its last entry.
    """

    epochs: int = 3
    batch_size: int = 12
    lr_schedule: tuple[float, ...] = (1e-3, 5e-4, 1e-4)

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if not self.lr_schedule or any(lr <= 0 for lr in self.lr_schedule):
            raise ValueError("lr_schedule must hold positive rates")

    def lr_for(self, epoch: int) -> float:
        return self.lr_schedule[min(epoch, len(self.lr_schedule) - 1)]


@dataclass(frozen=True)
class ConceptSet:
    """Discovered concept vectors plus the linear head that reads them.

    ``vectors`` has one unit-norm row per concept; ``head_weights`` and
    ``head_bias`` turn a document's concept-score vector into a logit.
    ``salient`` is optional and attached after discovery by
    :func:`salient_examples`.
    """

    vectors: np.ndarray
    head_weights: np.ndarray
    head_bias: float
    snippet_length: int
    seed: int
    train_completeness: float
    salient: SalienceReport | None = None

    def __post_init__(self):
        vectors = np.array(self.vectors, dtype=float)
        weights = np.array(self.head_weights, dtype=float)
        if vectors.ndim != 2 or vectors.shape[0] < 1:
            raise ValueError("vectors must be a (K, dim) matrix")
        if weights.shape != (vectors.shape[0],):
            raise ValueError("head_weights must hold one weight per concept")
        norms = np.linalg.norm(vectors, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValueError("concept vectors must have unit norm")
        if self.snippet_length < 1:
            raise ValueError("snippet_length must be at least 1")
        vectors.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "head_weights", weights)

    @property
    def n_concepts(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def with_salient(self, salient: SalienceReport) -> "ConceptSet":
        return replace(self, salient=salient)


def extract_snippets(
    corpus: Corpus,
    snippet_length: int = 5,
    config: TokenizerConfig = DEFAULT_TOKENIZER,
) -> tuple[Snippet, ...]:
    """Slide a token window of ``snippet_length`` (stride 1) over each segment.

    Segments shorter than the window contribute nothing. Raises when the
    whole corpus yields no snippets.
    """
    if snippet_length < 1:
        raise ValueError("snippet_length must be at least 1")
    snippets = []
    for segment in corpus.segments:
        tokens = tokenize(segment.text, config)
        for start in range(len(tokens) - snippet_length + 1):
            window = tokens[start : start + snippet_length]
            snippets.append(Snippet(segment.id, " ".join(window), start))
    if not snippets:
        raise RuntimeError("no snippets")
    return tuple(snippets)


def _require_latent(encoder) -> None:
    if not isinstance(encoder, LatentPredictor):
        raise TypeError("encoder must expose latent()")


def _encode_snippets(encoder, snippets) -> np.ndarray:
    rows = [np.asarray(encoder.latent(s.text), dtype=float) for s in snippets]
    dims = {r.shape for r in rows}
    if len(dims) != 1 or rows[0].ndim != 1:
        raise ValueError("encoder latent() must return a fixed-size vector")
    return np.stack(rows)


def _group_by_segment(snippets) -> dict[str, list[int]]:
    groups: dict[str, list[int]] = {}
    for idx, snippet in enumerate(snippets):
        groups.setdefault(snippet.segment_id, []).append(idx)
    return groups


def _document_scores(latents: np.ndarray, rows: list[int], vectors: np.ndarray):
    """Max snippet activation per concept, with the argmax row for gradients."""
    dots = latents[rows] @ vectors.T
    best = dots.argmax(axis=0)
    scores = dots[best, np.arange(vectors.shape[0])]
    picked = np.asarray(rows)[best]
    return scores, picked


def _seed_concepts(latents: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Pick initial concepts from strongly activating snippet latents.

    Start from a random high-norm snippet direction, then greedily add the
    candidate whose nearest chosen direction is farthest in cosine distance.
    Falls back to random unit vectors when the latents carry no signal.
    """
    dim = latents.shape[1]
    norms = np.linalg.norm(latents, axis=1)
    top = norms.max()
    if top <= 0.0:
        raw = rng.standard_normal((k, dim))
        return raw / np.linalg.norm(raw, axis=1, keepdims=True)
    candidates = latents[norms >= 0.5 * top]
    candidates = candidates / np.linalg.norm(candidates, axis=1, keepdims=True)
    first = int(rng.integers(0, len(candidates)))
    chosen = [candidates[first]]
    while len(chosen) < k:
        cosines = candidates @ np.stack(chosen).T
        nearest = cosines.max(axis=1)
        chosen.append(candidates[int(np.argmin(nearest))])
    return np.stack(chosen)


def _warm_start_head(latents, doc_rows, vectors, targets):
    """Least-squares head over the seeded concepts' document scores.

    The optimizer budget is a short fine-tune, so the head starts at the
    linear map that already best separates the targets (as signed labels)
    given the initial concept directions.
    """
    scores = np.stack(
        [_document_scores(latents, rows, vectors)[0] for rows in doc_rows]
    )
    design = np.hstack([scores, np.ones((len(doc_rows), 1))])
    signed = 2.0 * targets - 1.0
    theta, *_ = np.linalg.lstsq(design, signed, rcond=None)
    return theta[:-1].copy(), theta[-1:].copy()


def discover_concepts(
    encoder,
    corpus: Corpus,
    n_concepts: int = 10,
    snippet_length: int = 5,
    seed: int = 0,
    config: ConceptConfig | None = None,
    tokenizer: TokenizerConfig = DEFAULT_TOKENIZER,
) -> ConceptSet:
    """Find concept directions that explain the encoder's own predictions.

    The optimization target is fidelity, not ground truth: per document the
    head's logit over concept scores is trained with logistic loss against
    the hard prediction the encoder itself makes on the full document text.
    Concept vectors are re-normalized to the unit sphere after every step.
    Documents shorter than the snippet window are left out.
    """
    _require_latent(encoder)
    if n_concepts < 1:
        raise ValueError("n_concepts must be at least 1")
    config = config or ConceptConfig()

    snippets = extract_snippets(corpus, snippet_length, tokenizer)
    latents = _encode_snippets(encoder, snippets)
    groups = _group_by_segment(snippets)
    segments = [s for s in corpus.segments if s.id in groups]
    doc_rows = [groups[s.id] for s in segments]
    targets = np.array(
        [1.0 if encoder.predict_log_odds(s.text) > 0.0 else 0.0 for s in segments]
    )

    rng = np.random.default_rng(seed)
    vectors = _seed_concepts(latents, n_concepts, rng)
    head, bias = _warm_start_head(latents, doc_rows, vectors, targets)

    params = [vectors, head, bias]
    moment1 = [np.zeros_like(p) for p in params]
    moment2 = [np.zeros_like(p) for p in params]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0

    n_docs = len(segments)
    for epoch in range(config.epochs):
        lr = config.lr_for(epoch)
        order = rng.permutation(n_docs)
        for start in range(0, n_docs, config.batch_size):
            batch = order[start : start + config.batch_size]
            grad_vectors = np.zeros_like(vectors)
            grad_head = np.zeros_like(head)
            grad_bias = 0.0
            for doc in batch:
                scores, picked = _document_scores(latents, doc_rows[doc], vectors)
                logit = float(head @ scores) + float(bias[0])
                push = _stable_sigmoid(logit) - targets[doc]
                grad_head += push * scores
                grad_bias += push
                grad_vectors += (push * head)[:, None] * latents[picked]
            scale = 1.0 / len(batch)
            grads = [grad_vectors * scale, grad_head * scale, np.array([grad_bias * scale])]

            step += 1
            for p, g, m1, m2 in zip(params, grads, moment1, moment2):
                m1 *= beta1
                m1 += (1 - beta1) * g
                m2 *= beta2
                m2 += (1 - beta2) * g * g
                hat1 = m1 / (1 - beta1**step)
                hat2 = m2 / (1 - beta2**step)
                p -= lr * hat1 / (np.sqrt(hat2) + eps)
            vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)

    correct = 0
    for doc in range(n_docs):
        scores, _ = _document_scores(latents, doc_rows[doc], vectors)
        predicted = 1.0 if float(head @ scores) + float(bias[0]) > 0.0 else 0.0
        correct += bool(predicted == targets[doc])
    return ConceptSet(
        vectors=vectors,
        head_weights=head,
        head_bias=float(bias[0]),
        snippet_length=snippet_length,
        seed=seed,
        train_completeness=correct / n_docs,
    )


def _stable_sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def completeness_score(
    concepts: ConceptSet,
    corpus: Corpus,
    model,
    tokenizer: TokenizerConfig = DEFAULT_TOKENIZER,
) -> float:
    """Fraction of documents where the concept head matches the model.

    Both sides produce hard predictions: the model on the raw document
    text, the head on the document's max-over-snippets concept scores.
    """
    _require_latent(model)
    snippets = extract_snippets(corpus, concepts.snippet_length, tokenizer)
    latents = _encode_snippets(model, snippets)
    groups = _group_by_segment(snippets)
    segments = [s for s in corpus.segments if s.id in groups]

    agree = 0
    for segment in segments:
        scores, _ = _document_scores(latents, groups[segment.id], concepts.vectors)
        reconstructed = float(concepts.head_weights @ scores) + concepts.head_bias > 0.0
        modeled = model.predict_log_odds(segment.text) > 0.0
        agree += reconstructed == modeled
    return agree / len(segments)


def salient_examples(
    concepts: ConceptSet,
    encoder,
    corpus: Corpus,
    top_m: int = 25,
    tokenizer: TokenizerConfig = DEFAULT_TOKENIZER,
) -> SalienceReport:
    """Rank snippets of ``corpus`` by activation against each concept.

    Meant to run on held-out text so the examples describe the concept, not
    the fit. When fewer than ``top_m`` snippets exist, all are returned and
    the shortfall is flagged.
    """
    if top_m < 1:
        raise ValueError("top_m must be at least 1")
    _require_latent(encoder)
    snippets = extract_snippets(corpus, concepts.snippet_length, tokenizer)
    latents = _encode_snippets(encoder, snippets)

    per_concept = []
    for k in range(concepts.n_concepts):
        scores = latents @ concepts.vectors[k]
        ranked = np.argsort(-scores, kind="stable")[:top_m]
        per_concept.append(
            tuple(
                SalientSnippet(
                    segment_id=snippets[i].segment_id,
                    text=snippets[i].text,
                    position=snippets[i].position,
                    score=float(scores[i]),
                )
                for i in ranked
            )
        )
    return SalienceReport(
        per_concept=tuple(per_concept),
        top_m=top_m,
        shortfall=len(snippets) < top_m,
    )


def format_concept_card(index: int, concepts: ConceptSet) -> str:
    """Render one concept as a plain-text card of its top snippets."""
    if concepts.salient is None:
        raise ValueError("concept set carries no salience report")
    if not 0 <= index < concepts.n_concepts:
        raise IndexError("concept index out of range")
    lines = [
        f"concept {index}  (head weight {concepts.head_weights[index]:+.3f})",
        "-" * 56,
    ]
    for snippet in concepts.salient.per_concept[index]:
        lines.append(f"{snippet.score:+8.3f}  {snippet.segment_id:<16} ...{snippet.text}...")
    return "\n".join(lines)


CONCEPT_FORMAT = "tracekit-concepts/1"


def save_concepts(path, concepts: ConceptSet) -> None:
    """Write a concept set as a JSON header plus binary vector block."""
    header = {
        "format": CONCEPT_FORMAT,
        "snippet_length": concepts.snippet_length,
        "seed": concepts.seed,
        "head_bias": concepts.head_bias,
        "train_completeness": concepts.train_completeness,
    }
    write_container(
        path,
        header,
        {"vectors": concepts.vectors, "head_weights": concepts.head_weights},
    )


def load_concepts(path) -> ConceptSet:
    header, tensors = read_container(path)
    if header.get("format") != CONCEPT_FORMAT:
        raise ValueError("not a concept-set file")
    return ConceptSet(
        vectors=tensors["vectors"],
        head_weights=tensors["head_weights"],
        head_bias=float(header["head_bias"]),
        snippet_length=int(header["snippet_length"]),
        seed=int(header["seed"]),
        train_completeness=float(header["train_completeness"]),
    )
