import io

import pytest
from hypothesis import given
from hypothesis import strategies as st
from PIL import Image

from resel.errors import DecodeError
from resel.imageops import (
    ImageDims,
    dims_of,
    encode_jpeg,
    load_image,
    resize,
    resize_payload,
    target_dims,
)

sides = st.integers(min_value=1, max_value=5000)


def png_bytes(width, height, color=(200, 40, 40)):
    buf = io.BytesIO()
    Image.new("RGB", (width, height), color).save(buf, format="PNG")
    return buf.getvalue()


class TestTargetDims:
    def test_exact_halving(self):
        assert target_dims(ImageDims(2048, 1024), 1024) == ImageDims(1024, 512)

    def test_no_upscale(self):
        assert target_dims(ImageDims(800, 600), 1024) == ImageDims(800, 600)

    def test_short_side_rounding(self):
        # 333 * 384 / 1000 = 127.872 -> 128
        assert target_dims(ImageDims(1000, 333), 384) == ImageDims(384, 128)

    def test_portrait_orientation(self):
        assert target_dims(ImageDims(333, 1000), 384) == ImageDims(128, 384)

    def test_short_side_floors_at_one(self):
        assert target_dims(ImageDims(10000, 1), 384) == ImageDims(384, 1)

    def test_rejects_nonpositive_r(self):
        with pytest.raises(ValueError):
            target_dims(ImageDims(100, 100), 0)

    @given(sides, sides, st.integers(min_value=1, max_value=4096))
    def test_never_increases_either_side(self, w, h, r):
        out = target_dims(ImageDims(w, h), r)
        assert out.width <= w and out.height <= h

    @given(sides, sides, st.integers(min_value=1, max_value=4096))
    def test_long_side_equals_r_when_downscaling(self, w, h, r):
        native = ImageDims(w, h)
        out = target_dims(native, r)
        if native.long_side > r:
            assert out.long_side == r

    @given(sides, sides)
    def test_identity_when_r_at_least_long_side(self, w, h):
        native = ImageDims(w, h)
        assert target_dims(native, native.long_side) == native
        assert target_dims(native, native.long_side + 100) == native

    @given(
        st.integers(min_value=32, max_value=4000),
        st.integers(min_value=32, max_value=4000),
        st.integers(min_value=16, max_value=2048),
    )
    def test_aspect_within_one_pixel_of_exact(self, w, h, r):
        out = target_dims(ImageDims(w, h), r)
        if max(w, h) <= r:
            return
        scale = r / max(w, h)
        short_exact = (h if w >= h else w) * scale
        short_out = out.height if w >= h else out.width
        if short_exact < 0.5:
            assert short_out == 1  # floor at one pixel
        else:
            assert abs(short_out - short_exact) <= 0.5 + 1e-9


class TestResize:
    def test_identity_resize_is_same_object(self):
        img = load_image(png_bytes(64, 48))
        assert resize(img, ImageDims(64, 48)) is img

    def test_constant_color_stays_constant(self):
        img = Image.new("RGB", (4, 4), (17, 99, 201))
        out = resize(img, ImageDims(2, 2))
        assert out.size == (2, 2)
        assert {out.getpixel((x, y)) for x in range(2) for y in range(2)} == {(17, 99, 201)}

    def test_dimension_contract(self):
        img = Image.new("RGB", (512, 512))
        for x in range(0, 512, 16):
            for y in range(0, 512, 16):
                img.putpixel((x, y), (255, 255, 255))
        out = resize(img, ImageDims(384, 384))
        assert out.size == (384, 384)

    def test_filters_differ_but_dims_match(self):
        img = load_image(png_bytes(100, 80))
        for name in ("bicubic", "bilinear", "lanczos"):
            assert resize(img, ImageDims(50, 40), filter=name).size == (50, 40)


class TestPayloads:
    def test_load_image_rejects_garbage(self):
        with pytest.raises(DecodeError):
            load_image(b"not an image at all")

    def test_dims_of_reads_header(self):
        assert dims_of(png_bytes(123, 45)) == ImageDims(123, 45)

    def test_dims_of_rejects_garbage(self):
        with pytest.raises(DecodeError):
            dims_of(b"\x00\x01\x02")

    def test_jpeg_roundtrip(self):
        img = Image.new("RGB", (32, 32), (10, 200, 30))
        data = encode_jpeg(img, quality=95)
        assert load_image(data).size == (32, 32)

    def test_identity_payload_forwards_original_bytes(self):
        data = png_bytes(300, 200)
        payload, native, sent = resize_payload(data, 1024)
        assert payload is data
        assert native == sent == ImageDims(300, 200)

    def test_downscale_payload(self):
        data = png_bytes(1000, 333)
        payload, native, sent = resize_payload(data, 384)
        assert native == ImageDims(1000, 333)
        assert sent == ImageDims(384, 128)
        assert dims_of(payload) == sent

    def test_rgba_png_encodes_to_jpeg(self):
        buf = io.BytesIO()
        Image.new("RGBA", (600, 400), (5, 5, 5, 128)).save(buf, format="PNG")
        payload, _, sent = resize_payload(buf.getvalue(), 384)
        assert dims_of(payload) == sent == ImageDims(384, 256)
