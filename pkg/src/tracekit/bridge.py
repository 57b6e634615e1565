"""Line-protocol client for external model servers.

A bridge server is any process that speaks newline-delimited JSON over
stdio or TCP: one handshake line announcing the protocol version and its
latent dimension (or null), then one response line per request. The client
owns the connection serially and matches requests to responses by a
monotonically increasing id, so predictors built on top of it slot into
the same places as local models.
"""

from __future__ import annotations

import json
import math
import socket
import subprocess
from dataclasses import dataclass

import numpy as np

PROTOCOL_VERSION = "trace-bridge/1"


@dataclass(frozen=True)
class BridgeEndpoint:
    """Where a bridge server lives: a subprocess command or a TCP address."""

    command: tuple[str, ...] | None = None
    host: str | None = None
    port: int | None = None
    protocol: str = PROTOCOL_VERSION

    def __post_init__(self):
        if self.command is not None:
            object.__setattr__(self, "command", tuple(self.command))
        stdio = self.command is not None
        tcp = self.host is not None or self.port is not None
        if stdio == tcp:
            raise ValueError("endpoint needs either a command or a host:port, not both")
        if tcp and (self.host is None or self.port is None):
            raise ValueError("tcp endpoint needs both host and port")


class BridgeClient:
    """Serially-owned session against one bridge server.

    The handshake is read eagerly at construction; every later exchange is
    one request line out, one response line in. Close the client (or use
    it as a context manager) to shut the transport down.
    """

    def __init__(self, endpoint: BridgeEndpoint):
        self.endpoint = endpoint
        self._next_id = 1
        self._process = None
        self._socket = None
        if endpoint.command is not None:
            self._process = subprocess.Popen(
                endpoint.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                encoding="utf-8",
            )
            self._writer = self._process.stdin
            self._reader = self._process.stdout
        else:
            self._socket = socket.create_connection((endpoint.host, endpoint.port))
            self._writer = self._socket.makefile("w", encoding="utf-8")
            self._reader = self._socket.makefile("r", encoding="utf-8")

        handshake = self._read_line()
        payload = self._parse(handshake)
        if payload.get("protocol") != endpoint.protocol:
            raise RuntimeError(f"protocol error: {handshake!r}")
        latent_dim = payload.get("latent_dim")
        if latent_dim is not None and (not isinstance(latent_dim, int) or latent_dim < 1):
            raise RuntimeError(f"protocol error: {handshake!r}")
        self.latent_dim = latent_dim

    def __enter__(self) -> "BridgeClient":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    def close(self) -> None:
        if self._process is not None:
            try:
                self._process.stdin.close()
            except OSError:
                pass
            try:
                self._process.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._process.kill()
                self._process.wait()
            self._process = None
        if self._socket is not None:
            self._writer.close()
            self._reader.close()
            self._socket.close()
            self._socket = None

    def _read_line(self) -> str:
        try:
            line = self._reader.readline()
        except (OSError, ValueError) as exc:
            raise RuntimeError("bridge closed") from exc
        if line == "":
            raise RuntimeError("bridge closed")
        return line.rstrip("\n")

    @staticmethod
    def _parse(line: str) -> dict:
        try:
            payload = json.loads(line)
        except json.JSONDecodeError as exc:
            raise RuntimeError(f"protocol error: {line!r}") from exc
        if not isinstance(payload, dict):
            raise RuntimeError(f"protocol error: {line!r}")
        return payload

    def _exchange(self, kind: str, texts: list[str]) -> dict:
        if not texts:
            raise ValueError("texts must be a non-empty list")
        request_id = self._next_id
        self._next_id += 1
        request = {"id": request_id, "kind": kind, "texts": list(texts)}
        try:
            self._writer.write(json.dumps(request) + "\n")
            self._writer.flush()
        except (OSError, BrokenPipeError, ValueError) as exc:
            raise RuntimeError("bridge closed") from exc
        line = self._read_line()
        payload = self._parse(line)
        if payload.get("id") != request_id:
            raise RuntimeError(f"protocol error: {line!r}")
        return payload

    def predict(self, texts: list[str]) -> list[float]:
        payload = self._exchange("predict", texts)
        values = payload.get("log_odds")
        line = json.dumps(payload)
        if not isinstance(values, list) or len(values) != len(texts):
            raise RuntimeError(f"protocol error: {line!r}")
        result = []
        for value in values:
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise RuntimeError(f"protocol error: {line!r}")
            result.append(float(value))
        return result

    def latent(self, texts: list[str]) -> list[np.ndarray]:
        if self.latent_dim is None:
            raise RuntimeError("bridge does not serve latents")
        payload = self._exchange("latent", texts)
        vectors = payload.get("vectors")
        line = json.dumps(payload)
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise RuntimeError(f"protocol error: {line!r}")
        result = []
        for vector in vectors:
            if not isinstance(vector, list) or len(vector) != self.latent_dim:
                raise RuntimeError(f"protocol error: {line!r}")
            array = np.asarray(vector, dtype=float)
            if not np.all(np.isfinite(array)):
                raise RuntimeError(f"protocol error: {line!r}")
            result.append(array)
        return result


class BridgePredictor:
    """Predictor facade over a bridge connection (no latent access)."""

    def __init__(self, client: BridgeClient):
        self.client = client

    def predict_log_odds(self, text: str) -> float:
        return self.client.predict([text])[0]


class LatentBridgePredictor(BridgePredictor):
    """Bridge predictor that also exposes the server's latent vectors."""

    def __init__(self, client: BridgeClient):
        if client.latent_dim is None:
            raise ValueError("bridge reports no latent dimension")
        super().__init__(client)

    def latent(self, text: str) -> np.ndarray:
        return self.client.latent([text])[0]


def as_predictor(client: BridgeClient) -> BridgePredictor:
    """Wrap a client in the richest predictor its handshake supports."""
    if client.latent_dim is not None:
        return LatentBridgePredictor(client)
    return BridgePredictor(client)


def run_conformance_checks(make_client) -> dict:
    """Exercise a bridge implementation against the protocol contract.

    ``make_client`` must return a fresh connected :class:`BridgeClient`.
    Raises AssertionError on the first violated check; returns a summary
    of what was observed so callers can assert on server specifics.
    """
    probes = ["a quiet road", "the shelling started at dawn", "x"]

    with make_client() as client:
        assert client.endpoint.protocol == PROTOCOL_VERSION, "unexpected protocol version"

        values = client.predict(probes)
        assert len(values) == len(probes), "predict length contract broken"
        assert all(math.isfinite(v) for v in values), "non-finite log-odds"

        again = client.predict(probes)
        assert values == again, "server is not deterministic"

        singles = [client.predict([t])[0] for t in probes]
        assert values == singles, "batching changed predictions"

        latent_dim = client.latent_dim
        if latent_dim is not None:
            vectors = client.latent(probes[:2])
            assert len(vectors) == 2, "latent length contract broken"
            assert all(v.shape == (latent_dim,) for v in vectors), "latent dim mismatch"

        predictor = as_predictor(client)
        value = predictor.predict_log_odds(probes[0])
        assert math.isfinite(value), "predictor contract broken"
        if latent_dim is not None:
            assert predictor.latent(probes[0]).shape == (latent_dim,)

    # a fresh connection must hand back the same handshake and predictions
    with make_client() as client:
        assert client.latent_dim == latent_dim, "handshake latent_dim unstable"
        assert client.predict(probes) == values, "predictions unstable across sessions"

    return {"latent_dim": latent_dim, "sample_values": values}
