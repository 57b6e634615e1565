"""Line-protocol serving loop around one loaded checkpoint.

The wire format is newline-delimited JSON: a handshake announcing the
protocol version and latent dimension, then one response per request.
Requests carry an id, a kind (predict or latent), and a list of texts.
Texts are always pushed through the model one at a time, even inside a
batch request, so a batch answer is bit-for-bit the concatenation of
the single-text answers. A malformed request gets an error response and
the session carries on.
"""

from __future__ import annotations

import json
import socket
import sys

import torch

from hfbridge.model import BridgeServerConfig, load_served_model

PROTOCOL_VERSION = "trace-bridge/1"


class ModelSession:
    """Inference wrapper answering predict and latent requests."""

    def __init__(self, config: BridgeServerConfig):
        # single-threaded kernels keep outputs identical across processes
        torch.set_num_threads(1)
        self.config = config
        self.tokenizer, self.model = load_served_model(config.checkpoint, config.device)
        self.max_length = min(
            config.max_length, self.model.config.max_position_embeddings
        )
        self.latent_dim = int(self.model.config.hidden_size)

    def _encode(self, text: str):
        encoded = self.tokenizer(
            text,
            truncation=True,
            max_length=self.max_length,
            return_tensors="pt",
        )
        return {k: v.to(self.config.device) for k, v in encoded.items()}

    def predict_one(self, text: str) -> float:
        """Log-odds of the positive class: logit(1) minus logit(0)."""
        with torch.no_grad():
            logits = self.model(**self._encode(text)).logits[0]
        return float(logits[1] - logits[0])

    def latent_one(self, text: str) -> list[float]:
        """Pooled sequence representation, taken before the classifier head."""
        with torch.no_grad():
            pooled = self.model.bert(**self._encode(text)).pooler_output[0]
        return [float(v) for v in pooled]

    def respond(self, line: str) -> dict:
        """One response object for one request line, errors included."""
        try:
            request = json.loads(line)
        except json.JSONDecodeError:
            return {"id": None, "error": "malformed request: not valid JSON"}
        if not isinstance(request, dict):
            return {"id": None, "error": "malformed request: expected an object"}
        request_id = request.get("id")
        kind = request.get("kind")
        texts = request.get("texts")
        if kind not in ("predict", "latent"):
            return {"id": request_id, "error": f"unknown kind: {kind!r}"}
        if not isinstance(texts, list) or not all(isinstance(t, str) for t in texts):
            return {"id": request_id, "error": "texts must be a list of strings"}
        if kind == "predict":
            return {"id": request_id, "log_odds": [self.predict_one(t) for t in texts]}
        return {"id": request_id, "vectors": [self.latent_one(t) for t in texts]}


def serve_session(session: ModelSession, reader, writer) -> None:
    handshake = {"protocol": PROTOCOL_VERSION, "latent_dim": session.latent_dim}
    writer.write(json.dumps(handshake) + "\n")
    writer.flush()
    for line in reader:
        if not line.strip():
            continue
        writer.write(json.dumps(session.respond(line)) + "\n")
        writer.flush()


def serve(config: BridgeServerConfig) -> None:
    """Load the checkpoint and serve one session over stdio or TCP.

    TCP mode binds, prints the chosen port on stdout, and accepts a
    single connection; the process exits when the peer disconnects.
    """
    session = ModelSession(config)
    try:
        if config.transport == "tcp":
            server = socket.create_server((config.host, config.port))
            print(server.getsockname()[1], flush=True)
            conn, _ = server.accept()
            with conn:
                reader = conn.makefile("r", encoding="utf-8")
                writer = conn.makefile("w", encoding="utf-8")
                serve_session(session, reader, writer)
            server.close()
        else:
            serve_session(session, sys.stdin, sys.stdout)
    except BrokenPipeError:
        pass
