"""Backbones that turn an (image, query) pair into one feature vector.

Two implementations share the same surface: a hash-derived fake for
weights-free testing, and a truncated compact VLM whose mid-layer
final-token hidden state is the served feature. The adapter owns its
own preprocessing (resize to the backbone's input side) since every
backbone differs.
"""

from __future__ import annotations

import hashlib
import io
import threading
from dataclasses import dataclass
from typing import Any

import numpy as np
from PIL import Image, UnidentifiedImageError


class BadImage(ValueError):
    """Request image bytes could not be decoded."""


@dataclass(frozen=True)
class BackboneSettings:
    fake: bool = False
    fake_dim: int = 960
    model_id: str = "HuggingFaceTB/SmolVLM-500M-Instruct"
    layer: int = 16          # truncation point; hidden state served from here
    max_input_side: int = 384
    device: str = "cpu"


def decode_image(image_bytes: bytes) -> Image.Image:
    try:
        img = Image.open(io.BytesIO(image_bytes))
        img.load()
        return img.convert("RGB")
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise BadImage(f"cannot decode image: {exc}") from exc


def cap_long_side(img: Image.Image, side: int) -> Image.Image:
    w, h = img.size
    longest = max(w, h)
    if longest <= side:
        return img
    scale = side / longest
    return img.resize((max(1, round(w * scale)), max(1, round(h * scale))), Image.Resampling.BICUBIC)


class FakeBackbone:
    """Deterministic hash-derived vectors; no model weights involved.

    The digest of (preprocessed image bytes, query) seeds a PRNG, so
    identical inputs always map to identical vectors and any change to
    either input decorrelates the output.
    """

    def __init__(self, settings: BackboneSettings):
        self.settings = settings
        self.dim = settings.fake_dim
        self.ready = True

    def handshake(self) -> dict[str, Any]:
        return {
            "backbone": "fake",
            "layer": self.settings.layer,
            "dim": self.dim,
            "max_input_side": self.settings.max_input_side,
            "parameter_count": 0,
        }

    def features(self, image_bytes: bytes, query: str) -> np.ndarray:
        img = cap_long_side(decode_image(image_bytes), self.settings.max_input_side)
        buf = io.BytesIO()
        img.save(buf, format="PNG")
        digest = hashlib.sha256()
        digest.update(buf.getvalue())
        digest.update(b"\x00")
        digest.update(query.encode("utf-8"))
        seed = int.from_bytes(digest.digest()[:8], "little")
        rng = np.random.default_rng(seed)
        return rng.standard_normal(self.dim)


class TruncatedVlmBackbone:
    """Compact VLM with its upper LLM layers removed.

    Only the first ``layer`` transformer blocks run; the served feature
    is the final token's hidden state at that depth, which carries the
    joint image-query context at roughly half the LLM's cost. Weights
    load in a background thread; the service reports 503 until ready.
    """

    def __init__(self, settings: BackboneSettings):
        self.settings = settings
        self.ready = False
        self.dim = 0
        self._parameter_count = 0
        self._parameter_count_full = 0
        self._model = None
        self._processor = None
        self._lock = threading.Lock()
        threading.Thread(target=self._load, daemon=True).start()

    def _load(self) -> None:
        import torch
        from transformers import AutoModelForVision2Seq, AutoProcessor

        processor = AutoProcessor.from_pretrained(self.settings.model_id)
        model = AutoModelForVision2Seq.from_pretrained(
            self.settings.model_id, torch_dtype=torch.float32
        )
        model.eval().to(self.settings.device)
        self._parameter_count_full = sum(p.numel() for p in model.parameters())
        text_model = model.model.text_model
        keep = self.settings.layer
        if 0 < keep < len(text_model.layers):
            text_model.layers = text_model.layers[:keep]
        self._parameter_count = sum(p.numel() for p in model.parameters())
        with self._lock:
            self._model = model
            self._processor = processor
            self.dim = int(model.config.text_config.hidden_size)
            self.ready = True

    def handshake(self) -> dict[str, Any]:
        return {
            "backbone": self.settings.model_id,
            "layer": self.settings.layer,
            "dim": self.dim,
            "max_input_side": self.settings.max_input_side,
            "parameter_count": self._parameter_count,
            "parameter_count_full": self._parameter_count_full,
        }

    def features(self, image_bytes: bytes, query: str) -> np.ndarray:
        import torch

        img = cap_long_side(decode_image(image_bytes), self.settings.max_input_side)
        messages = [
            {
                "role": "user",
                "content": [{"type": "image"}, {"type": "text", "text": query}],
            }
        ]
        prompt = self._processor.apply_chat_template(messages, add_generation_prompt=True)
        inputs = self._processor(text=prompt, images=[img], return_tensors="pt").to(
            self.settings.device
        )
        with torch.no_grad():
            out = self._model(**inputs, output_hidden_states=True)
        # after truncation the deepest hidden state is the configured layer
        hidden = out.hidden_states[-1][0, -1]
        return hidden.float().cpu().numpy()


def build_backbone(settings: BackboneSettings):
    if settings.fake:
        return FakeBackbone(settings)
    return TruncatedVlmBackbone(settings)
