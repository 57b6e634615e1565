import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from tracekit.bridge import (
    BridgeClient,
    BridgeEndpoint,
    BridgePredictor,
    LatentBridgePredictor,
    as_predictor,
    run_conformance_checks,
)
from tracekit.explain.shapley import exact_shap
from tracekit.models import Predictor, classify

STUB = str(Path(__file__).parent / "stub_bridge.py")


def stdio_endpoint(*extra: str) -> BridgeEndpoint:
    return BridgeEndpoint(command=(sys.executable, STUB, *extra))


def make_default_client() -> BridgeClient:
    return BridgeClient(stdio_endpoint("--latent-dim", "4"))


class TestHandshake:
    def test_latent_dim_recorded(self):
        with make_default_client() as client:
            assert client.latent_dim == 4

    def test_null_latent_dim(self):
        with BridgeClient(stdio_endpoint("--no-latent")) as client:
            assert client.latent_dim is None

    def test_wrong_protocol_rejected(self):
        with pytest.raises(RuntimeError, match="protocol error"):
            BridgeClient(stdio_endpoint("--mode", "bad-handshake"))

    def test_endpoint_validation(self):
        with pytest.raises(ValueError):
            BridgeEndpoint()
        with pytest.raises(ValueError):
            BridgeEndpoint(command=("x",), host="localhost", port=1)
        with pytest.raises(ValueError):
            BridgeEndpoint(host="localhost")


class TestExchanges:
    def test_predict_matches_length_oracle(self):
        texts = ["a quiet road", "x", "the market was crowded"]
        with make_default_client() as client:
            values = client.predict(texts)
        assert values == [float(len(t) - 5) for t in texts]

    def test_latent_vectors_share_dimension(self):
        with make_default_client() as client:
            vectors = client.latent(["abc", "aabbccdd"])
        assert [v.shape for v in vectors] == [(4,), (4,)]
        assert vectors[1][0] == 2.0

    def test_latent_refused_when_not_served(self):
        with BridgeClient(stdio_endpoint("--no-latent")) as client:
            with pytest.raises(RuntimeError, match="does not serve latents"):
                client.latent(["abc"])

    def test_ids_strictly_increase(self):
        with make_default_client() as client:
            for expected in (1, 2, 3):
                assert client._next_id == expected
                client.predict(["text"])

    def test_empty_batch_rejected(self):
        with make_default_client() as client:
            with pytest.raises(ValueError, match="non-empty"):
                client.predict([])


class TestErrorPaths:
    def test_garbage_line_is_protocol_error(self):
        with BridgeClient(stdio_endpoint("--mode", "garbage-line")) as client:
            with pytest.raises(RuntimeError, match="protocol error.*not json"):
                client.predict(["abc"])

    def test_wrong_id_is_protocol_error(self):
        with BridgeClient(stdio_endpoint("--mode", "wrong-id")) as client:
            with pytest.raises(RuntimeError, match="protocol error"):
                client.predict(["abc"])

    def test_short_batch_is_protocol_error(self):
        with BridgeClient(stdio_endpoint("--mode", "short-batch", "--latent-dim", "4")) as client:
            with pytest.raises(RuntimeError, match="protocol error"):
                client.predict(["abc", "def"])

    def test_server_exit_is_bridge_closed(self):
        with BridgeClient(stdio_endpoint("--mode", "die-after-handshake")) as client:
            with pytest.raises(RuntimeError, match="bridge closed"):
                client.predict(["abc"])


class TestTcpTransport:
    def test_round_trip_over_tcp(self):
        process = subprocess.Popen(
            [sys.executable, STUB, "--tcp", "--latent-dim", "3"],
            stdout=subprocess.PIPE,
            text=True,
        )
        try:
            port = int(process.stdout.readline())
            with BridgeClient(BridgeEndpoint(host="127.0.0.1", port=port)) as client:
                assert client.latent_dim == 3
                assert client.predict(["hello there"]) == [6.0]
                assert client.latent(["aa"])[0].shape == (3,)
        finally:
            process.terminate()
            process.wait()


class TestPredictorFacade:
    def test_substitutable_into_explain_stack(self):
        with make_default_client() as client:
            predictor = as_predictor(client)
            assert isinstance(predictor, LatentBridgePredictor)
            assert isinstance(predictor, Predictor)
            assert classify(predictor, "a long enough sentence") == 1
            report = exact_shap(predictor, "calm town market")
            assert abs(report.residual) <= 1e-10

    def test_plain_facade_without_latent(self):
        with BridgeClient(stdio_endpoint("--no-latent")) as client:
            predictor = as_predictor(client)
            assert isinstance(predictor, BridgePredictor)
            assert not isinstance(predictor, LatentBridgePredictor)
            assert predictor.predict_log_odds("abcdefg") == 2.0

    def test_latent_facade_requires_dimension(self):
        with BridgeClient(stdio_endpoint("--no-latent")) as client:
            with pytest.raises(ValueError, match="no latent dimension"):
                LatentBridgePredictor(client)

    def test_latent_vector_shape(self):
        with make_default_client() as client:
            predictor = as_predictor(client)
            vector = predictor.latent("aabb")
            assert isinstance(vector, np.ndarray)
            assert vector.shape == (4,)


class TestConformance:
    def test_stub_passes_conformance(self):
        summary = run_conformance_checks(make_default_client)
        assert summary["latent_dim"] == 4
        assert summary["sample_values"] == [7.0, 23.0, -4.0]

    def test_stub_without_latent_passes(self):
        summary = run_conformance_checks(
            lambda: BridgeClient(stdio_endpoint("--no-latent"))
        )
        assert summary["latent_dim"] is None
