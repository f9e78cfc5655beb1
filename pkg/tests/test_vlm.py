import io
import itertools

import pytest
from PIL import Image

from resel.errors import (
    UnknownSample,
    VlmAuthError,
    VlmProtocolError,
    VlmTransportError,
)
from resel.labeler import LabelingConfig, label_from_utilities
from resel.menu import default_menu
from resel.metrics import nls
from resel.vlm import (
    SimulatedSample,
    SimulatedVlm,
    SimulatedVlmSpec,
    VlmEndpoint,
    VlmRequest,
    chat,
    corrupt_answer,
    corrupt_to_distance,
    simulated_chat,
)

from .stubs import StubServer, chat_completion


def jpeg_bytes(width, height):
    buf = io.BytesIO()
    Image.new("RGB", (width, height), (1, 2, 3)).save(buf, format="JPEG")
    return buf.getvalue()


@pytest.fixture
def stub():
    server = StubServer()
    yield server
    server.stop()


def endpoint(base_url, **overrides):
    kwargs = dict(base_url=base_url + "/v1", model="stub-model",
                  timeout_s=5.0, max_retries=3, backoff_base_s=0.01)
    kwargs.update(overrides)
    return VlmEndpoint(**kwargs)


REQ = VlmRequest(image_bytes=b"\xff\xd8fake", query="hello?")


class TestHttpChat:
    def test_echo_answer_and_usage(self, stub):
        @stub.route("POST", "/v1/chat/completions")
        def ok(body):
            assert body["model"] == "stub-model"
            assert body["messages"][0]["content"][1]["text"] == "hello?"
            return 200, chat_completion("OK", prompt_tokens=42, completion_tokens=3)

        base = stub.start()
        resp = chat(endpoint(base), REQ)
        assert resp.answer == "OK"
        assert resp.prompt_tokens == 42
        assert resp.latency_ms >= 0.0

    def test_retries_then_succeeds(self, stub):
        counter = itertools.count()

        @stub.route("POST", "/v1/chat/completions")
        def flaky(body):
            if next(counter) < 2:
                return 500, {"error": "boom"}
            return 200, chat_completion("recovered")

        base = stub.start()
        resp = chat(endpoint(base), REQ)
        assert resp.answer == "recovered"
        assert len(stub.requests) == 3

    def test_exhausted_retries_raise_transport(self, stub):
        @stub.route("POST", "/v1/chat/completions")
        def always_500(body):
            return 500, {"error": "boom"}

        base = stub.start()
        with pytest.raises(VlmTransportError):
            chat(endpoint(base), REQ)
        assert len(stub.requests) == 3

    def test_malformed_body_is_protocol_error(self, stub):
        @stub.route("POST", "/v1/chat/completions")
        def garbage(body):
            return 200, {"unexpected": "shape"}

        base = stub.start()
        with pytest.raises(VlmProtocolError):
            chat(endpoint(base), REQ)

    def test_auth_rejection_not_retried(self, stub):
        @stub.route("POST", "/v1/chat/completions")
        def reject(body):
            return 401, {"error": "bad token"}

        base = stub.start()
        with pytest.raises(VlmAuthError):
            chat(endpoint(base), REQ)
        assert len(stub.requests) == 1

    def test_connection_refused_is_transport_error(self):
        dead = endpoint("http://127.0.0.1:9", max_retries=2, backoff_base_s=0.01)
        with pytest.raises(VlmTransportError):
            chat(dead, REQ)

    def test_bearer_token_from_env(self, stub, monkeypatch):
        monkeypatch.setenv("STUB_VLM_TOKEN", "sekrit")
        seen = {}

        @stub.route("POST", "/v1/chat/completions")
        def ok(body):
            return 200, chat_completion("fine")

        base = stub.start()
        chat(endpoint(base, api_key_env="STUB_VLM_TOKEN"), REQ)
        # header captured at the HTTP layer is not exposed by the stub; assert no crash
        assert stub.requests


SPEC = SimulatedVlmSpec(
    samples={
        "doc-1": SimulatedSample(sufficient_resolution=768, correct_answer="T.F. Riehl"),
        "doc-2": SimulatedSample(sufficient_resolution=384, correct_answer="P. Carter"),
    }
)


class TestSimulatedChat:
    def test_above_threshold_correct(self):
        resp = simulated_chat(SPEC, "doc-1", REQ, 1024)
        assert resp.answer == "T.F. Riehl"
        assert nls(resp.answer, "T.F. Riehl") == 1.0

    def test_below_threshold_scores_zero(self):
        resp = simulated_chat(SPEC, "doc-1", REQ, 384)
        assert nls(resp.answer, "T.F. Riehl") == 0.0

    def test_boundary_inclusive(self):
        assert simulated_chat(SPEC, "doc-2", REQ, 384).answer == "P. Carter"

    def test_unknown_sample(self):
        with pytest.raises(UnknownSample):
            simulated_chat(SPEC, "nope", REQ, 384)

    def test_pure_function(self):
        a = simulated_chat(SPEC, "doc-1", REQ, 500)
        b = simulated_chat(SPEC, "doc-1", REQ, 500)
        assert a.answer == b.answer

    def test_simulated_vlm_uses_decoded_image_dims(self):
        vlm = SimulatedVlm(SPEC)
        # 700px long side < 768 threshold, even though we asked "for" 1024
        resp = vlm.answer(jpeg_bytes(700, 300), "q", sample_id="doc-1")
        assert nls(resp.answer, "T.F. Riehl") == 0.0
        resp = vlm.answer(jpeg_bytes(800, 300), "q", sample_id="doc-1")
        assert resp.answer == "T.F. Riehl"

    def test_labels_recover_planted_thresholds(self):
        menu = default_menu()
        cfg = LabelingConfig()
        for threshold in (384, 768, 1024):
            utilities = [
                1.0 if r >= threshold else 0.0 for r in menu.entries
            ]
            label = label_from_utilities(utilities, menu, cfg)
            assert label.resolution == min(r for r in menu.entries if r >= threshold)

    def test_spec_round_trip(self, tmp_path):
        path = tmp_path / "spec.json"
        SPEC.save(path)
        loaded = SimulatedVlmSpec.load(path)
        assert loaded.samples["doc-1"].sufficient_resolution == 768
        assert loaded.samples["doc-2"].correct_answer == "P. Carter"


class TestCorruption:
    def test_corrupt_answer_scores_zero(self):
        for answer in ("x", "P. Carter", "a longer answer with words"):
            assert nls(corrupt_answer(answer), answer) == 0.0

    def test_corrupt_to_distance_pins_similarity(self):
        gt = "a" * 20
        assert nls(corrupt_to_distance(gt, 7), gt) == pytest.approx(0.65)
        assert nls(corrupt_to_distance(gt, 0), gt) == 1.0

    def test_corrupt_to_distance_bounds(self):
        with pytest.raises(ValueError):
            corrupt_to_distance("abc", 4)
