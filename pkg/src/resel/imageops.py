"""Deterministic geometry and resampling for capping an image's longest side.

Downscaling only: an image already within the requested resolution is
passed through untouched, since upscaling adds no information and the
labeling procedure itself stops at native resolution.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

from PIL import Image, UnidentifiedImageError

from .errors import DecodeError

RESAMPLE_FILTERS = {
    "bicubic": Image.Resampling.BICUBIC,
    "bilinear": Image.Resampling.BILINEAR,
    "lanczos": Image.Resampling.LANCZOS,
}

DEFAULT_FILTER = "bicubic"
DEFAULT_JPEG_QUALITY = 90


@dataclass(frozen=True)
class ImageDims:
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"dimensions must be at least 1x1, got {self.width}x{self.height}")

    @property
    def long_side(self) -> int:
        return max(self.width, self.height)

    def as_tuple(self) -> tuple[int, int]:
        return (self.width, self.height)


def _round_half_away(x: float) -> int:
    # round-half-away-from-zero for positive values; floor at 1 pixel
    return max(1, math.floor(x + 0.5))


def target_dims(native: ImageDims, r: int) -> ImageDims:
    """Dimensions after capping the longest side at ``r``; never upscales."""
    if r < 1:
        raise ValueError(f"target resolution must be positive, got {r}")
    long_side = native.long_side
    if long_side <= r:
        return native
    scale = r / long_side
    if native.width >= native.height:
        return ImageDims(width=r, height=_round_half_away(native.height * scale))
    return ImageDims(width=_round_half_away(native.width * scale), height=r)


def load_image(data: bytes) -> Image.Image:
    """Decode PNG/JPEG bytes into a raster image."""
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
        return img
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise DecodeError(f"could not decode image bytes: {exc}") from exc


def dims_of(data: bytes) -> ImageDims:
    """Read image dimensions from the header without decoding pixels."""
    try:
        with Image.open(io.BytesIO(data)) as img:
            w, h = img.size
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise DecodeError(f"could not read image header: {exc}") from exc
    return ImageDims(width=w, height=h)


def resize(image: Image.Image, dims: ImageDims, filter: str = DEFAULT_FILTER) -> Image.Image:
    """Resample to exactly ``dims``; identity sizes are returned unprocessed."""
    if image.size == dims.as_tuple():
        return image
    return image.resize(dims.as_tuple(), RESAMPLE_FILTERS[filter])


def encode_jpeg(image: Image.Image, quality: int = DEFAULT_JPEG_QUALITY) -> bytes:
    """Encode for forwarding to a VLM API."""
    if image.mode not in ("RGB", "L"):
        image = image.convert("RGB")
    buf = io.BytesIO()
    image.save(buf, format="JPEG", quality=quality)
    return buf.getvalue()


def resize_payload(
    data: bytes,
    r: int,
    *,
    image: Image.Image | None = None,
    filter: str = DEFAULT_FILTER,
    quality: int = DEFAULT_JPEG_QUALITY,
) -> tuple[bytes, ImageDims, ImageDims]:
    """Cap the longest side of encoded image bytes at ``r``.

    Returns ``(payload, native_dims, sent_dims)``. When the image is
    already within ``r`` the original bytes are forwarded untouched.
    An already-decoded ``image`` may be supplied to skip re-decoding
    when the same source is resized at several resolutions.
    """
    native = dims_of(data)
    dims = target_dims(native, r)
    if dims == native:
        return data, native, native
    if image is None:
        image = load_image(data)
    return encode_jpeg(resize(image, dims, filter), quality), native, dims
