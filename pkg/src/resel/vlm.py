"""Transport to downstream VLMs: real over HTTP, simulated for desk-scale runs.

Both clients expose ``answer(image_bytes, query, sample_id=...)`` so the
labeler and gateway never care which one they are talking to. The HTTP
client speaks the OpenAI chat-completions dialect with the image inlined
as a base64 data URL.
"""

from __future__ import annotations

import base64
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import httpx

from .errors import (
    ConfigError,
    UnknownSample,
    VlmAuthError,
    VlmProtocolError,
    VlmTimeoutError,
    VlmTransportError,
)
from .imageops import dims_of

logger = logging.getLogger(__name__)

CORRUPTION_CHAR = "•"  # bullet; never appears in simulator answers


@dataclass(frozen=True)
class VlmEndpoint:
    base_url: str
    model: str
    api_key_env: str | None = None
    timeout_s: float = 120.0
    max_retries: int = 3
    backoff_base_s: float = 1.0
    temperature: float = 0.0
    max_tokens: int = 128
    max_connections: int = 16

    def to_dict(self) -> dict[str, Any]:
        return {
            "base_url": self.base_url,
            "model": self.model,
            "api_key_env": self.api_key_env,
            "timeout_s": self.timeout_s,
            "max_retries": self.max_retries,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "VlmEndpoint":
        try:
            return cls(
                base_url=str(d["base_url"]).rstrip("/"),
                model=str(d["model"]),
                api_key_env=d.get("api_key_env"),
                timeout_s=float(d.get("timeout_s", 120.0)),
                max_retries=int(d.get("max_retries", 3)),
                backoff_base_s=float(d.get("backoff_base_s", 1.0)),
                temperature=float(d.get("temperature", 0.0)),
                max_tokens=int(d.get("max_tokens", 128)),
                max_connections=int(d.get("max_connections", 16)),
            )
        except KeyError as exc:
            raise ConfigError(f"vlm endpoint config missing {exc}") from exc


@dataclass(frozen=True)
class VlmRequest:
    image_bytes: bytes
    query: str
    temperature: float = 0.0
    max_tokens: int = 128


@dataclass
class VlmResponse:
    answer: str
    prompt_tokens: int | None = None
    completion_tokens: int | None = None
    latency_ms: float = 0.0


def image_data_url(image_bytes: bytes, mime: str = "image/jpeg") -> str:
    return f"data:{mime};base64," + base64.b64encode(image_bytes).decode("ascii")


def chat(endpoint: VlmEndpoint, req: VlmRequest, *, client: httpx.Client | None = None) -> VlmResponse:
    """Single-turn chat completion with the image attached as a data URL.

    Transient transport errors and 5xx responses are retried with
    exponential backoff up to ``endpoint.max_retries`` total attempts.
    """
    import os

    headers = {"Content-Type": "application/json"}
    if endpoint.api_key_env:
        token = os.environ.get(endpoint.api_key_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
    payload = {
        "model": endpoint.model,
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
        "messages": [
            {
                "role": "user",
                "content": [
                    {"type": "image_url", "image_url": {"url": image_data_url(req.image_bytes)}},
                    {"type": "text", "text": req.query},
                ],
            }
        ],
    }
    url = endpoint.base_url.rstrip("/") + "/chat/completions"
    owned = client is None
    client = client or httpx.Client(
        timeout=endpoint.timeout_s,
        limits=httpx.Limits(max_connections=endpoint.max_connections),
    )
    start = time.perf_counter()
    last_error: Exception | None = None
    try:
        for attempt in range(endpoint.max_retries):
            if attempt:
                time.sleep(endpoint.backoff_base_s * (2 ** (attempt - 1)))
            try:
                resp = client.post(url, json=payload, headers=headers)
            except httpx.TimeoutException as exc:
                last_error = VlmTimeoutError(f"timed out after {endpoint.timeout_s}s: {exc}")
                continue
            except httpx.HTTPError as exc:
                last_error = VlmTransportError(f"transport failure: {exc}")
                continue
            if resp.status_code in (401, 403):
                raise VlmAuthError(f"endpoint rejected credentials (HTTP {resp.status_code})")
            if resp.status_code >= 500:
                last_error = VlmTransportError(f"server error HTTP {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise VlmProtocolError(f"unexpected HTTP {resp.status_code}: {resp.text[:200]}")
            return _parse_completion(resp, start)
        raise last_error or VlmTransportError("no attempts made")
    finally:
        if owned:
            client.close()


def _parse_completion(resp: httpx.Response, start: float) -> VlmResponse:
    try:
        body = resp.json()
        answer = body["choices"][0]["message"]["content"]
    except (json.JSONDecodeError, ValueError, KeyError, IndexError, TypeError) as exc:
        raise VlmProtocolError(f"malformed chat completion: {exc}") from exc
    if not isinstance(answer, str):
        raise VlmProtocolError(f"answer is not text: {type(answer).__name__}")
    usage = body.get("usage") or {}
    return VlmResponse(
        answer=answer,
        prompt_tokens=usage.get("prompt_tokens"),
        completion_tokens=usage.get("completion_tokens"),
        latency_ms=(time.perf_counter() - start) * 1000.0,
    )


class HttpVlmClient:
    """Shareable client for one endpoint; bounded concurrent connections."""

    def __init__(self, endpoint: VlmEndpoint):
        self.endpoint = endpoint
        self._client = httpx.Client(
            timeout=endpoint.timeout_s,
            limits=httpx.Limits(max_connections=endpoint.max_connections),
        )

    def answer(self, image_bytes: bytes, query: str, sample_id: str | None = None) -> VlmResponse:
        req = VlmRequest(
            image_bytes=image_bytes,
            query=query,
            temperature=self.endpoint.temperature,
            max_tokens=self.endpoint.max_tokens,
        )
        return chat(self.endpoint, req, client=self._client)

    def close(self) -> None:
        self._client.close()


# ------------------------------------------------------------------ simulator


def corrupt_answer(correct: str) -> str:
    """Deterministic corruption scoring 0 under the thresholded similarity.

    Every character is replaced by a sentinel that never occurs in real
    answers, so the edit distance equals the full length and the
    similarity is exactly 0 before thresholding.
    """
    length = max(len(correct), 1)
    return CORRUPTION_CHAR * length


def corrupt_to_distance(correct: str, distance: int) -> str:
    """Replace ``distance`` characters with sentinels, pinning the edit distance."""
    if distance <= 0:
        return correct
    if distance > len(correct):
        raise ValueError(f"cannot plant distance {distance} in a {len(correct)}-char answer")
    return CORRUPTION_CHAR * distance + correct[distance:]


@dataclass(frozen=True)
class SimulatedSample:
    """Planted behavior for one sample id.

    Step mode answers correctly at or above the sufficiency threshold and
    emits a corrupted answer below it. A ramp may override specific
    resolutions with fixed response strings to exercise the margin rule.
    """

    sufficient_resolution: int
    correct_answer: str
    responses_by_resolution: Mapping[int, str] = field(default_factory=dict)

    def respond(self, r_effective: int) -> str:
        for r in sorted(self.responses_by_resolution, reverse=True):
            if r_effective >= r:
                return self.responses_by_resolution[r]
        if r_effective >= self.sufficient_resolution:
            return self.correct_answer
        return corrupt_answer(self.correct_answer)


@dataclass
class SimulatedVlmSpec:
    samples: dict[str, SimulatedSample] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"samples": {}}
        for sid, s in self.samples.items():
            entry: dict[str, Any] = {
                "sufficient_resolution": s.sufficient_resolution,
                "correct_answer": s.correct_answer,
            }
            if s.responses_by_resolution:
                entry["responses_by_resolution"] = {
                    str(r): text for r, text in s.responses_by_resolution.items()
                }
            out["samples"][sid] = entry
        return out

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SimulatedVlmSpec":
        samples = {}
        for sid, entry in d["samples"].items():
            samples[sid] = SimulatedSample(
                sufficient_resolution=int(entry["sufficient_resolution"]),
                correct_answer=str(entry["correct_answer"]),
                responses_by_resolution={
                    int(r): str(text)
                    for r, text in entry.get("responses_by_resolution", {}).items()
                },
            )
        return cls(samples=samples)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "SimulatedVlmSpec":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def simulated_chat(
    spec: SimulatedVlmSpec, sample_id: str, req: VlmRequest, r_effective: int
) -> VlmResponse:
    """Pure function of (spec, sample_id, r_effective)."""
    try:
        sample = spec.samples[sample_id]
    except KeyError:
        raise UnknownSample(f"simulator has no sample {sample_id!r}") from None
    answer = sample.respond(r_effective)
    return VlmResponse(
        answer=answer,
        prompt_tokens=max(1, len(req.query) // 4),
        completion_tokens=max(1, len(answer) // 4),
        latency_ms=0.0,
    )


class SimulatedVlm:
    """Drop-in stand-in for a pretrained VLM, keyed by sample id.

    The effective resolution is taken from the decoded request image, so
    callers exercise the real resize path rather than a side channel.
    """

    def __init__(self, spec: SimulatedVlmSpec):
        self.spec = spec
        self.calls = 0

    def answer(self, image_bytes: bytes, query: str, sample_id: str | None = None) -> VlmResponse:
        if sample_id is None:
            raise UnknownSample("simulated VLM needs a sample id")
        self.calls += 1
        dims = dims_of(image_bytes)
        req = VlmRequest(image_bytes=image_bytes, query=query)
        return simulated_chat(self.spec, sample_id, req, dims.long_side)
