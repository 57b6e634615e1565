"""Chat-completion API predictor with log-probability extraction.

A remote model becomes a predictor by asking it to label one text at a
time and reading the log-probabilities of the label tokens from the first
generated position. Responses can be cached on disk so that evaluation
reruns cost nothing and reproduce bit for bit.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import requests

REQUIRED_INSTRUCTION = "Only answer with either '0' or '1'"

DEFAULT_SYSTEM_TEXT = (
    "You are tasked with detecting trauma in text segments of transcripts of "
    "genocide tribunals. Specifically, detect instances that meet the APA's "
    "definition of trauma. Psychological trauma, as defined by the APA, "
    "includes experiences of exposure to actual or threatened death, serious "
    "injury, or sexual violence, either directly encountered or witnessed. "
    "It also includes instances where individuals learn that the traumatic "
    "event(s) occurred to a close family member or friend. Label the text "
    "with '1' if there are indicators of trauma based on this definition, "
    "and '0' if there are no indicators of trauma. Note that trauma is rare "
    "and occurs in less than 20% of the cases. "
    "Only answer with either '0' or '1'."
)

DEFAULT_DOMAIN_SLOT = "transcripts of genocide tribunals"

FALLBACK_MAGNITUDE = 10.0
MISSING_LABEL_PENALTY = math.log(10.0)


@dataclass(frozen=True)
class PromptTemplate:
    """System prompt with a replaceable domain phrase.

    ``domain_slot`` names the substring of ``system_text`` that describes
    where the texts come from; ``context`` is what to say instead. The
    defaults substitute the phrase with itself, leaving the prompt as-is.
    """

    system_text: str = DEFAULT_SYSTEM_TEXT
    domain_slot: str = DEFAULT_DOMAIN_SLOT
    context: str = DEFAULT_DOMAIN_SLOT
    expected_labels: tuple[str, str] = ("0", "1")

    def __post_init__(self):
        if REQUIRED_INSTRUCTION not in self.system_text:
            raise ValueError(
                f"system_text must contain the instruction {REQUIRED_INSTRUCTION!r}"
            )
        if len(self.expected_labels) != 2 or len(set(self.expected_labels)) != 2:
            raise ValueError("expected_labels must be two distinct strings")


def render_prompt(template: PromptTemplate, sample_text: str) -> tuple[str, str]:
    """Build the (system, user) message pair for one sample."""
    if not sample_text:
        raise ValueError("sample_text must be non-empty")
    system = template.system_text
    if template.domain_slot:
        system = system.replace(template.domain_slot, template.context)
    return system, sample_text


@dataclass(frozen=True)
class ApiPredictorConfig:
    """Connection settings for a chat-completion endpoint.

    Decoding is pinned: temperature 0, a fixed seed, and one generated
    token with top log-probabilities requested, so the label distribution
    is read off the first position.
    """

    endpoint: str
    model: str
    auth_env: str = "TRACE_API_KEY"
    timeout: float = 30.0
    max_retries: int = 3
    backoff: float = 0.5
    top_logprobs: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be non-negative")
        if self.backoff < 0:
            raise ValueError("backoff must be non-negative")


def extract_log_odds(
    top_logprobs: dict[str, float],
    completion_text: str,
    labels: tuple[str, str] = ("0", "1"),
) -> float:
    """Turn first-token log-probabilities into a label log-odds.

    Returns lp(labels[1]) - lp(labels[0]). A label absent from the top
    tokens is floored one decade below the weakest returned token. When
    neither label was returned at all, the completion text itself decides
    the sign at a fixed +/-10 magnitude.
    """
    negative, positive = labels
    scores = {token.strip(): logprob for token, logprob in top_logprobs.items()}
    lp_negative = scores.get(negative)
    lp_positive = scores.get(positive)

    if lp_negative is None and lp_positive is None:
        answer = completion_text.strip()
        if answer == positive:
            return FALLBACK_MAGNITUDE
        if answer == negative:
            return -FALLBACK_MAGNITUDE
        raise ValueError("unparseable completion")

    floor = min(scores.values()) - MISSING_LABEL_PENALTY
    if lp_negative is None:
        lp_negative = floor
    if lp_positive is None:
        lp_positive = floor
    return lp_positive - lp_negative


def _parse_response(payload: dict) -> tuple[dict[str, float], str]:
    choice = payload["choices"][0]
    completion = choice["message"]["content"] or ""
    top: dict[str, float] = {}
    logprobs = choice.get("logprobs")
    if logprobs and logprobs.get("content"):
        first = logprobs["content"][0]
        for entry in first.get("top_logprobs", []):
            token = entry["token"]
            if token not in top:
                top[token] = float(entry["logprob"])
    return top, completion


def api_log_odds(
    config: ApiPredictorConfig,
    messages: list[dict],
    labels: tuple[str, str] = ("0", "1"),
) -> float:
    """Send one chat-completion request and extract the label log-odds.

    Transport failures and 5xx/429 responses are retried with exponential
    backoff; anything still failing raises "api unavailable".
    """
    token = os.environ.get(config.auth_env)
    if not token:
        raise RuntimeError(f"auth token missing: set {config.auth_env}")
    body = {
        "model": config.model,
        "messages": messages,
        "temperature": 0.0,
        "max_tokens": 1,
        "logprobs": True,
        "top_logprobs": config.top_logprobs,
        "seed": config.seed,
    }
    headers = {"Authorization": f"Bearer {token}"}

    response = None
    for attempt in range(config.max_retries + 1):
        try:
            response = requests.post(
                config.endpoint, json=body, headers=headers, timeout=config.timeout
            )
        except requests.RequestException:
            response = None
        if response is not None and response.status_code == 200:
            break
        retryable = response is None or response.status_code in (429,) or (
            500 <= response.status_code < 600
        )
        if not retryable or attempt == config.max_retries:
            raise RuntimeError("api unavailable")
        time.sleep(config.backoff * 2**attempt)
    if response is None or response.status_code != 200:
        raise RuntimeError("api unavailable")

    try:
        top, completion = _parse_response(response.json())
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise RuntimeError("api unavailable") from exc
    return extract_log_odds(top, completion, labels)


class ApiPredictor:
    """Predictor backed by a chat-completion API, with optional disk cache.

    The cache key is the pair (model name, prompt hash), so edits to the
    template or the sample bust the entry while reruns hit it. Batch
    scoring fans out over a small thread pool; each request stands alone.
    """

    def __init__(
        self,
        config: ApiPredictorConfig,
        template: PromptTemplate | None = None,
        cache_dir: str | Path | None = None,
        max_concurrency: int = 4,
    ):
        if max_concurrency < 1:
            raise ValueError("max_concurrency must be at least 1")
        self.config = config
        self.template = template or PromptTemplate()
        self.cache_dir = Path(cache_dir) if cache_dir is not None else None
        self.max_concurrency = max_concurrency
        if self.cache_dir is not None:
            self.cache_dir.mkdir(parents=True, exist_ok=True)

    def _cache_path(self, system: str, user: str) -> Path | None:
        if self.cache_dir is None:
            return None
        digest = hashlib.sha256(
            json.dumps(
                {"model": self.config.model, "system": system, "user": user},
                sort_keys=True,
                ensure_ascii=False,
            ).encode()
        ).hexdigest()
        return self.cache_dir / f"{digest}.json"

    def predict_log_odds(self, text: str) -> float:
        system, user = render_prompt(self.template, text)
        path = self._cache_path(system, user)
        if path is not None and path.exists():
            return float(json.loads(path.read_text())["log_odds"])

        messages = [
            {"role": "system", "content": system},
            {"role": "user", "content": user},
        ]
        value = api_log_odds(self.config, messages, self.template.expected_labels)

        if path is not None:
            payload = json.dumps({"log_odds": value}, sort_keys=True)
            handle = tempfile.NamedTemporaryFile(
                "w", dir=path.parent, suffix=".tmp", delete=False
            )
            with handle:
                handle.write(payload)
            os.replace(handle.name, path)
        return value

    def predict_many(self, texts: list[str]) -> list[float]:
        if not texts:
            return []
        workers = min(self.max_concurrency, len(texts))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(self.predict_log_odds, texts))
