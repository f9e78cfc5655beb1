import base64
import io

import pytest
from fastapi.testclient import TestClient
from PIL import Image

from resel_adapter.app import create_app
from resel_adapter.backbones import BackboneSettings, FakeBackbone, cap_long_side


def jpeg_b64(width=640, height=480, color=(120, 40, 40)):
    buf = io.BytesIO()
    Image.new("RGB", (width, height), color).save(buf, format="JPEG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


@pytest.fixture(scope="module")
def client():
    app = create_app(BackboneSettings(fake=True, fake_dim=48))
    with TestClient(app) as c:
        yield c


class TestConformance:
    """Contract suite; runs against any backbone (here: fake, no weights)."""

    def test_healthz_ok(self, client):
        resp = client.get("/healthz")
        assert resp.status_code == 200
        assert resp.json() == {"status": "ok"}

    def test_handshake_reports_constant_dim(self, client):
        resp = client.get("/handshake")
        assert resp.status_code == 200
        body = resp.json()
        assert body["dim"] == 48
        assert body["layer"] == 16
        assert body["max_input_side"] == 384
        assert client.get("/handshake").json()["dim"] == body["dim"]

    def test_vector_length_matches_handshake_on_every_response(self, client):
        dim = client.get("/handshake").json()["dim"]
        for i, (w, h) in enumerate(((640, 480), (100, 900), (1, 1))):
            resp = client.post(
                "/features", json={"image_b64": jpeg_b64(w, h), "query": f"q {i}"}
            )
            assert resp.status_code == 200
            assert len(resp.json()["vector"]) == dim

    def test_identical_inputs_identical_vectors(self, client):
        payload = {"image_b64": jpeg_b64(), "query": "what color is the square?"}
        first = client.post("/features", json=payload).json()["vector"]
        second = client.post("/features", json=payload).json()["vector"]
        assert first == second

    def test_query_conditioning(self, client):
        image = jpeg_b64()
        a = client.post("/features", json={"image_b64": image, "query": "coarse?"}).json()
        b = client.post("/features", json={"image_b64": image, "query": "fine print?"}).json()
        assert a["vector"] != b["vector"]

    def test_image_conditioning(self, client):
        query = "same query"
        a = client.post(
            "/features", json={"image_b64": jpeg_b64(color=(200, 0, 0)), "query": query}
        ).json()
        b = client.post(
            "/features", json={"image_b64": jpeg_b64(color=(0, 0, 200)), "query": query}
        ).json()
        assert a["vector"] != b["vector"]

    def test_stateless_across_interleaved_requests(self, client):
        payload = {"image_b64": jpeg_b64(), "query": "anchor"}
        before = client.post("/features", json=payload).json()["vector"]
        for i in range(5):
            client.post("/features", json={"image_b64": jpeg_b64(64, 64), "query": str(i)})
        after = client.post("/features", json=payload).json()["vector"]
        assert before == after

    def test_malformed_image_is_400(self, client):
        bad = base64.b64encode(b"not an image").decode()
        resp = client.post("/features", json={"image_b64": bad, "query": "q"})
        assert resp.status_code == 400

    def test_invalid_base64_is_400(self, client):
        resp = client.post("/features", json={"image_b64": "%%%", "query": "q"})
        assert resp.status_code == 400

    def test_missing_query_is_400(self, client):
        resp = client.post("/features", json={"image_b64": jpeg_b64()})
        assert resp.status_code == 400

    def test_missing_image_is_400(self, client):
        resp = client.post("/features", json={"query": "q"})
        assert resp.status_code == 400


class TestFakeBackbone:
    def test_deterministic_across_instances(self):
        settings = BackboneSettings(fake=True, fake_dim=16)
        a = FakeBackbone(settings)
        b = FakeBackbone(settings)
        image = base64.b64decode(jpeg_b64())
        va = a.features(image, "q")
        vb = b.features(image, "q")
        assert (va == vb).all()

    def test_input_capping_preserves_aspect(self):
        img = Image.new("RGB", (1000, 500))
        out = cap_long_side(img, 384)
        assert out.size == (384, 192)
        small = Image.new("RGB", (200, 100))
        assert cap_long_side(small, 384) is small

    def test_loading_state_returns_503(self):
        class Stalled(FakeBackbone):
            def __init__(self, settings):
                super().__init__(settings)
                self.ready = False

        from resel_adapter import app as app_module

        settings = BackboneSettings(fake=True, fake_dim=8)
        real_builder = app_module.build_backbone
        app_module.build_backbone = lambda s: Stalled(s)
        try:
            app = app_module.create_app(settings)
        finally:
            app_module.build_backbone = real_builder
        with TestClient(app) as client:
            assert client.get("/healthz").status_code == 503
            assert client.get("/handshake").status_code == 503
            resp = client.post("/features", json={"image_b64": jpeg_b64(), "query": "q"})
            assert resp.status_code == 503
