"""HTTP gateway that routes image-query pairs at the selected resolution.

Request pipeline: a cheap low-resolution pass feeds the feature service,
the selector head picks a resolution, the image is resized and forwarded
to the target VLM, and the answer comes back with per-stage cost
telemetry. Baseline modes (passthrough, fixed sizes, discrete argmax)
are selectable per deployment and per request for A/B runs.
"""

from __future__ import annotations

import base64
import binascii
import json
import logging
import sys
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal

import httpx
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .cost import (
    ModelProfile,
    estimate_text_tokens,
    load_profile,
    prefill_flops,
    relative_savings,
    visual_tokens,
)
from .errors import ConfigError, DecodeError, FeatureServiceError, VlmError
from .imageops import ImageDims, dims_of, load_image, resize_payload
from .menu import ResolutionMenu
from .selector import expected_resolution, load_head, round_to_supported, softmax
from .vlm import HttpVlmClient, VlmEndpoint, image_data_url

logger = logging.getLogger(__name__)

MODES = ("continuous", "discrete", "passthrough")  # plus "fixed:<r>"


class FeatureEndpointModel(BaseModel):
    model_config = ConfigDict(extra="forbid")
    url: str
    timeout_s: float = 10.0


class VlmEndpointModel(BaseModel):
    model_config = ConfigDict(extra="forbid")
    base_url: str
    model: str
    api_key_env: str | None = None
    timeout_s: float = 120.0
    max_retries: int = 3
    backoff_base_s: float = 1.0
    temperature: float = 0.0
    max_tokens: int = 128
    max_connections: int = 16


class MenuModel(BaseModel):
    model_config = ConfigDict(extra="forbid")
    entries: list[int] = Field(default=[384, 768, 1024])
    range_min: int | None = None
    range_max: int | None = None
    supported_sizes: list[int] | None = None


class GatewayConfigModel(BaseModel):
    model_config = ConfigDict(extra="forbid")
    listen_host: str = "127.0.0.1"
    listen_port: int = 8080
    feature_endpoint: FeatureEndpointModel
    target_vlm: VlmEndpointModel
    head_path: str
    menu: MenuModel = Field(default_factory=MenuModel)
    profile: str = "patchgrid-2b"
    mode: str = "continuous"
    concurrency_limit: int = Field(default=16, ge=1)
    feature_fallback: Literal["degrade", "fail"] = "degrade"
    resample_filter: Literal["bicubic", "bilinear", "lanczos"] = "bicubic"
    jpeg_quality: int = Field(default=90, ge=1, le=100)
    probe_ttl_s: float = 5.0


def parse_mode(mode: str) -> tuple[str, int | None]:
    """Split a mode string into (kind, fixed resolution)."""
    if mode in MODES:
        return mode, None
    if mode.startswith("fixed:"):
        try:
            r = int(mode.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"bad fixed mode {mode!r}; expected fixed:<pixels>") from None
        if r < 1:
            raise ConfigError(f"fixed resolution must be positive, got {r}")
        return "fixed", r
    raise ConfigError(f"unknown mode {mode!r}; expected one of {MODES} or fixed:<pixels>")


def load_gateway_config(path: str | Path) -> GatewayConfigModel:
    """Parse and validate a TOML or JSON gateway config file."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        raw = json.loads(text)
    else:
        if sys.version_info >= (3, 11):
            import tomllib
        else:
            import tomli as tomllib
        raw = tomllib.loads(text)
    try:
        return GatewayConfigModel.model_validate(raw)
    except ValidationError as exc:
        paths = "; ".join(
            ".".join(str(part) for part in err["loc"]) + ": " + err["msg"]
            for err in exc.errors()
        )
        raise ConfigError(f"invalid gateway config {path}: {paths}") from exc


@dataclass
class Selection:
    """Outcome of the selection stages for one request."""

    mode: str
    degraded: bool
    chosen_r: int
    r_continuous: float | None
    probabilities: list[float] | None
    dims_native: ImageDims
    latency_ms: dict[str, float] = field(default_factory=dict)


@dataclass
class GatewayTelemetry:
    mode: str
    degraded: bool
    chosen_r_continuous: float | None
    chosen_r_rounded: int
    probabilities: list[float] | None
    dims_native: ImageDims
    dims_sent: ImageDims
    visual_tokens_est: int
    text_tokens_est: int
    flops_est: float
    flops_native_est: float
    savings_pct: float
    latency_ms: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "mode": self.mode,
            "degraded": self.degraded,
            "chosen_r_continuous": self.chosen_r_continuous,
            "chosen_r_rounded": self.chosen_r_rounded,
            "probabilities": self.probabilities,
            "dims_native": self.dims_native.as_tuple(),
            "dims_sent": self.dims_sent.as_tuple(),
            "visual_tokens_est": self.visual_tokens_est,
            "text_tokens_est": self.text_tokens_est,
            "flops_est": self.flops_est,
            "flops_native_est": self.flops_native_est,
            "savings_pct": self.savings_pct,
            "latency_ms": self.latency_ms,
        }


class HealthMonitor:
    """Caches reachability probes of the upstream services."""

    def __init__(self, feature_url: str, vlm_base_url: str, ttl_s: float = 5.0):
        self.feature_url = feature_url.rstrip("/")
        self.vlm_base_url = vlm_base_url.rstrip("/")
        self.ttl_s = ttl_s
        self._lock = threading.Lock()
        self._checked_at = 0.0
        self._status: dict[str, bool] = {"feature_endpoint": False, "target_vlm": False}

    def _probe_one(self, url: str) -> bool:
        try:
            resp = httpx.get(url, timeout=2.0)
            return resp.status_code < 500
        except httpx.HTTPError:
            return False

    def status(self) -> dict[str, Any]:
        with self._lock:
            if time.monotonic() - self._checked_at > self.ttl_s:
                self._status = {
                    "feature_endpoint": self._probe_one(self.feature_url + "/healthz"),
                    "target_vlm": self._probe_one(self.vlm_base_url + "/models"),
                }
                self._checked_at = time.monotonic()
            down = [name for name, ok in self._status.items() if not ok]
        if not down:
            return {"status": "ok"}
        return {"status": "degraded:" + ",".join(down)}


class Gateway:
    """Immutable per-process snapshot of config, head, and upstream clients."""

    def __init__(self, config: GatewayConfigModel, *, profile: ModelProfile | None = None):
        self.config = config
        self.head = load_head(config.head_path)
        menu_cfg = config.menu
        self.menu = ResolutionMenu(
            entries=tuple(menu_cfg.entries),
            range_min=menu_cfg.range_min if menu_cfg.range_min is not None else menu_cfg.entries[0],
            range_max=menu_cfg.range_max if menu_cfg.range_max is not None else menu_cfg.entries[-1],
            supported_sizes=tuple(menu_cfg.supported_sizes) if menu_cfg.supported_sizes else None,
        )
        if self.head.menu.entries != self.menu.entries:
            raise ConfigError(
                f"head was trained on menu {list(self.head.menu.entries)} "
                f"but the gateway is configured with {list(self.menu.entries)}"
            )
        self.profile = profile or load_profile(config.profile)
        self.default_mode = config.mode
        kind, fixed_r = parse_mode(config.mode)
        if kind == "fixed" and fixed_r not in self.menu.supported:
            raise ConfigError(
                f"fixed mode resolution {fixed_r} is not in supported sizes {list(self.menu.supported)}"
            )
        self.vlm_endpoint = VlmEndpoint.from_dict(config.target_vlm.model_dump())
        self.vlm_client = HttpVlmClient(self.vlm_endpoint)
        self.feature_client = httpx.Client(timeout=config.feature_endpoint.timeout_s)
        self.health = HealthMonitor(
            config.feature_endpoint.url, config.target_vlm.base_url, ttl_s=config.probe_ttl_s
        )
        self.semaphore = threading.BoundedSemaphore(config.concurrency_limit)

    def close(self) -> None:
        self.vlm_client.close()
        self.feature_client.close()

    # ------------------------------------------------------------- pipeline

    def fetch_features(self, image_bytes: bytes, query: str) -> list[float]:
        url = self.config.feature_endpoint.url.rstrip("/") + "/features"
        try:
            resp = self.feature_client.post(
                url,
                json={"image_b64": base64.b64encode(image_bytes).decode("ascii"), "query": query},
            )
        except httpx.HTTPError as exc:
            raise FeatureServiceError(f"feature endpoint unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise FeatureServiceError(f"feature endpoint returned HTTP {resp.status_code}")
        try:
            vector = resp.json()["vector"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise FeatureServiceError(f"malformed feature response: {exc}") from exc
        if len(vector) != self.head.dim:
            raise FeatureServiceError(
                f"feature service returned dimension {len(vector)}, head expects {self.head.dim}"
            )
        return vector

    def select(self, image_bytes: bytes, query: str, mode: str | None, decoded=None) -> Selection:
        """Resolution-selection stages shared by both public endpoints."""
        mode = mode or self.default_mode
        kind, fixed_r = parse_mode(mode)
        if kind == "fixed" and fixed_r not in self.menu.supported:
            raise ConfigError(
                f"fixed resolution {fixed_r} not in supported sizes {list(self.menu.supported)}"
            )
        native = dims_of(image_bytes)
        stages: dict[str, float] = {}
        degraded = False
        r_continuous: float | None = None
        probabilities: list[float] | None = None

        if kind == "passthrough":
            chosen_r = native.long_side
        elif kind == "fixed":
            chosen_r = fixed_r
        else:
            t0 = time.perf_counter()
            cheap_payload, _, _ = resize_payload(
                image_bytes,
                self.menu.entries[0],
                image=decoded,
                filter=self.config.resample_filter,
                quality=self.config.jpeg_quality,
            )
            try:
                vector = self.fetch_features(cheap_payload, query)
            except FeatureServiceError as exc:
                if self.config.feature_fallback != "degrade":
                    raise
                logger.warning("feature service failed (%s); degrading to max resolution", exc)
                degraded = True
                vector = None
            stages["feature"] = (time.perf_counter() - t0) * 1000.0

            t0 = time.perf_counter()
            if vector is None:
                chosen_r = self.menu.supported[-1]
            else:
                p = softmax(self.head.logits(vector))
                probabilities = [float(v) for v in p]
                if kind == "discrete":
                    chosen_r = self.menu.entries[int(p.argmax())]
                else:
                    r_continuous = expected_resolution(p, self.head.menu)
                    chosen_r = round_to_supported(r_continuous, self.menu.supported)
            stages["select"] = (time.perf_counter() - t0) * 1000.0

        return Selection(
            mode=mode,
            degraded=degraded,
            chosen_r=chosen_r,
            r_continuous=r_continuous,
            probabilities=probabilities,
            dims_native=native,
            latency_ms=stages,
        )

    def telemetry_for(
        self, selection: Selection, dims_sent: ImageDims, text_tokens: int
    ) -> GatewayTelemetry:
        tokens_sent = visual_tokens(self.profile.scheme, dims_sent)
        tokens_native = visual_tokens(self.profile.scheme, selection.dims_native)
        flops_sent = prefill_flops(tokens_sent, text_tokens, self.profile.parameter_count)
        flops_native = prefill_flops(tokens_native, text_tokens, self.profile.parameter_count)
        return GatewayTelemetry(
            mode=selection.mode,
            degraded=selection.degraded,
            chosen_r_continuous=selection.r_continuous,
            chosen_r_rounded=selection.chosen_r,
            probabilities=selection.probabilities,
            dims_native=selection.dims_native,
            dims_sent=dims_sent,
            visual_tokens_est=tokens_sent,
            text_tokens_est=text_tokens,
            flops_est=flops_sent,
            flops_native_est=flops_native,
            savings_pct=relative_savings(flops_native, flops_sent),
            latency_ms={k: round(v, 3) for k, v in selection.latency_ms.items()},
        )

    def handle_query(
        self, image_bytes: bytes, query: str, mode: str | None = None
    ) -> tuple[str, GatewayTelemetry]:
        """Run the full pipeline for one image-query pair."""
        total_start = time.perf_counter()
        decoded = load_image(image_bytes)
        selection = self.select(image_bytes, query, mode, decoded=decoded)

        t0 = time.perf_counter()
        payload, _, dims_sent = resize_payload(
            image_bytes,
            selection.chosen_r,
            image=decoded,
            filter=self.config.resample_filter,
            quality=self.config.jpeg_quality,
        )
        selection.latency_ms["resize"] = (time.perf_counter() - t0) * 1000.0

        t0 = time.perf_counter()
        response = self.vlm_client.answer(payload, query)
        selection.latency_ms["vlm"] = (time.perf_counter() - t0) * 1000.0
        selection.latency_ms["total"] = (time.perf_counter() - total_start) * 1000.0

        text_tokens = response.prompt_tokens
        if text_tokens is None:
            text_tokens = estimate_text_tokens(query)
        return response.answer, self.telemetry_for(selection, dims_sent, text_tokens)


def _decode_image_field(body: dict[str, Any], client: httpx.Client) -> bytes:
    if "image_b64" in body:
        try:
            return base64.b64decode(body["image_b64"], validate=True)
        except (binascii.Error, ValueError) as exc:
            raise DecodeError(f"invalid base64 image: {exc}") from exc
    if "image_url" in body:
        url = body["image_url"]
        if url.startswith("data:"):
            return _data_url_bytes(url)
        try:
            resp = client.get(url, timeout=30.0)
            resp.raise_for_status()
            return resp.content
        except httpx.HTTPError as exc:
            raise DecodeError(f"cannot fetch image_url: {exc}") from exc
    raise DecodeError("request needs image_b64 or image_url")


def _data_url_bytes(url: str) -> bytes:
    try:
        _, payload = url.split(",", 1)
        return base64.b64decode(payload)
    except (ValueError, binascii.Error) as exc:
        raise DecodeError(f"invalid data URL: {exc}") from exc


def create_app(config: GatewayConfigModel, *, profile: ModelProfile | None = None):
    """Build the FastAPI application around an immutable Gateway snapshot."""
    from fastapi import FastAPI
    from fastapi.responses import JSONResponse

    gateway = Gateway(config, profile=profile)
    app = FastAPI(title="resel gateway", version="0.1.0")
    app.state.gateway = gateway

    @app.get("/healthz")
    def healthz():
        return gateway.health.status()

    @app.post("/v1/route")
    def route(body: dict):
        query = body.get("query", "")
        if not query:
            return JSONResponse(status_code=400, content={"error": "query is required"})
        try:
            image_bytes = _decode_image_field(body, gateway.feature_client)
            with gateway.semaphore:
                answer, telemetry = gateway.handle_query(image_bytes, query, body.get("mode"))
        except (DecodeError, ConfigError) as exc:
            return JSONResponse(status_code=400, content={"error": str(exc)})
        except FeatureServiceError as exc:
            return JSONResponse(status_code=502, content={"error": str(exc), "stage": "feature"})
        except VlmError as exc:
            return JSONResponse(status_code=502, content={"error": str(exc), "stage": "vlm"})
        return {"answer": answer, "telemetry": telemetry.to_dict()}

    @app.post("/v1/chat/completions")
    def chat_completions(body: dict):
        mode = body.pop("resolution_mode", None)
        try:
            image_bytes, query = _extract_chat_image(body, gateway.feature_client)
        except DecodeError as exc:
            return JSONResponse(status_code=400, content={"error": str(exc)})

        if image_bytes is None:
            status, content = _forward_chat(gateway, body)
            return JSONResponse(status_code=status, content=content)

        try:
            with gateway.semaphore:
                selection = gateway.select(image_bytes, query, mode)
                resized, _, dims_sent = resize_payload(
                    image_bytes,
                    selection.chosen_r,
                    filter=gateway.config.resample_filter,
                    quality=gateway.config.jpeg_quality,
                )
                _replace_chat_image(body, image_data_url(resized))
                status, content = _forward_chat(gateway, body)
        except (DecodeError, ConfigError) as exc:
            return JSONResponse(status_code=400, content={"error": str(exc)})
        except (FeatureServiceError, VlmError) as exc:
            return JSONResponse(status_code=502, content={"error": str(exc)})
        telemetry = gateway.telemetry_for(selection, dims_sent, estimate_text_tokens(query))
        headers = {
            "x-resolution-mode": telemetry.mode,
            "x-resolution-selected": str(telemetry.chosen_r_rounded),
            "x-resolution-savings-pct": f"{telemetry.savings_pct:.2f}",
        }
        return JSONResponse(status_code=status, content=content, headers=headers)

    return app


def _extract_chat_image(body: dict[str, Any], client: httpx.Client):
    """Find the first image part and the concatenated text of a chat body."""
    messages = body.get("messages")
    if not isinstance(messages, list):
        raise DecodeError("chat body needs a messages list")
    image_bytes = None
    texts: list[str] = []
    for message in messages:
        content = message.get("content")
        if isinstance(content, str):
            texts.append(content)
            continue
        if not isinstance(content, list):
            continue
        for part in content:
            ptype = part.get("type")
            if ptype == "text":
                texts.append(part.get("text", ""))
            elif ptype == "image_url" and image_bytes is None:
                url = (part.get("image_url") or {}).get("url", "")
                if url.startswith("data:"):
                    image_bytes = _data_url_bytes(url)
                elif url:
                    try:
                        resp = client.get(url, timeout=30.0)
                        resp.raise_for_status()
                        image_bytes = resp.content
                    except httpx.HTTPError as exc:
                        raise DecodeError(f"cannot fetch image_url: {exc}") from exc
    return image_bytes, " ".join(t for t in texts if t)


def _replace_chat_image(body: dict[str, Any], new_data_url: str) -> None:
    for message in body.get("messages", []):
        content = message.get("content")
        if not isinstance(content, list):
            continue
        for part in content:
            if part.get("type") == "image_url":
                part["image_url"] = {"url": new_data_url}
                return


def _forward_chat(gateway: Gateway, body: dict[str, Any]) -> tuple[int, Any]:
    endpoint = gateway.vlm_endpoint
    body = dict(body)
    body.setdefault("model", endpoint.model)
    url = endpoint.base_url.rstrip("/") + "/chat/completions"
    try:
        resp = gateway.vlm_client._client.post(url, json=body)
    except httpx.HTTPError as exc:
        raise VlmError(f"upstream chat call failed: {exc}") from exc
    try:
        return resp.status_code, resp.json()
    except json.JSONDecodeError:
        return resp.status_code, {"error": "upstream returned non-JSON"}


def serve(config: GatewayConfigModel) -> None:
    """Run the gateway under uvicorn (blocking)."""
    import uvicorn

    app = create_app(config)
    uvicorn.run(app, host=config.listen_host, port=config.listen_port, log_level="info")
