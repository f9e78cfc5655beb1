"""End-to-end smoke test: fake adapter + simulated VLM behind the gateway.

The primary gateway is consumed strictly through its external
interfaces: the `resel serve` CLI and the `/v1/route` HTTP API.
"""

import base64
import io
import json
import socket
import subprocess
import sys
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import httpx
import pytest
import uvicorn
from PIL import Image

from resel_adapter.app import create_app
from resel_adapter.backbones import BackboneSettings

DIM = 32


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


def jpeg_b64(width=1600, height=800):
    buf = io.BytesIO()
    Image.new("RGB", (width, height), (30, 90, 150)).save(buf, format="JPEG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


@pytest.fixture(scope="module")
def adapter_url():
    app = create_app(BackboneSettings(fake=True, fake_dim=DIM))
    server = uvicorn.Server(uvicorn.Config(app, host="127.0.0.1", port=0, log_level="error"))
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 10
    while not server.started:
        assert time.time() < deadline
        time.sleep(0.01)
    port = server.servers[0].sockets[0].getsockname()[1]
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=10)


@pytest.fixture(scope="module")
def vlm_url():
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):
            pass

        def _reply(self, status, payload):
            data = json.dumps(payload).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_GET(self):
            self._reply(200, {"object": "list", "data": []})

        def do_POST(self):
            length = int(self.headers.get("Content-Length") or 0)
            self.rfile.read(length)
            self._reply(200, {
                "choices": [{"message": {"role": "assistant", "content": "42 widgets"}}],
                "usage": {"prompt_tokens": 20, "completion_tokens": 3},
            })

    server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    host, port = server.server_address
    yield f"http://{host}:{port}"
    server.shutdown()
    server.server_close()


def test_gateway_routes_one_request_end_to_end(tmp_path, adapter_url, vlm_url):
    # a zero head gives uniform class probabilities: expectation 725.33 -> 768
    head_path = tmp_path / "head.json"
    zeros = base64.b64encode(b"\x00" * 8 * 3 * DIM).decode()
    zero_bias = base64.b64encode(b"\x00" * 8 * 3).decode()
    head_path.write_text(json.dumps({
        "format": "resel-head/1",
        "dim": DIM,
        "k": 3,
        "menu": {"entries": [384, 768, 1024], "range_min": 384, "range_max": 1024},
        "arch": "linear",
        "weights": zeros,
        "bias": zero_bias,
    }))

    port = free_port()
    config_path = tmp_path / "gateway.toml"
    config_path.write_text(f"""
listen_host = "127.0.0.1"
listen_port = {port}
head_path = "{head_path}"
mode = "continuous"

[feature_endpoint]
url = "{adapter_url}"
timeout_s = 10.0

[target_vlm]
base_url = "{vlm_url}/v1"
model = "sim"
timeout_s = 10.0
""")

    proc = subprocess.Popen(
        [sys.executable, "-m", "resel.cli", "serve", "--config", str(config_path)],
        stdout=subprocess.PIPE, stderr=subprocess.STDOUT, text=True,
    )
    try:
        base = f"http://127.0.0.1:{port}"
        deadline = time.time() + 20
        while True:
            try:
                if httpx.get(base + "/healthz", timeout=1.0).status_code == 200:
                    break
            except httpx.HTTPError:
                pass
            assert time.time() < deadline, "gateway did not come up"
            time.sleep(0.2)

        resp = httpx.post(
            base + "/v1/route",
            json={"image_b64": jpeg_b64(), "query": "how many widgets are listed?"},
            timeout=30.0,
        )
        assert resp.status_code == 200
        body = resp.json()
        assert body["answer"] == "42 widgets"
        telemetry = body["telemetry"]
        assert telemetry["chosen_r_rounded"] == 768  # uniform p over {384,768,1024}
        assert telemetry["dims_sent"] == [768, 384]
        assert telemetry["degraded"] is False
        assert len(telemetry["probabilities"]) == 3
        assert telemetry["savings_pct"] < 0

        health = httpx.get(base + "/healthz", timeout=5.0).json()
        assert health["status"] == "ok"
    finally:
        proc.terminate()
        try:
            proc.wait(timeout=10)
        except subprocess.TimeoutExpired:
            proc.kill()
