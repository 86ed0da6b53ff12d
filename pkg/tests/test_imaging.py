import colorsys
import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from riq.errors import CorruptImage, ImageNotFound, UnsupportedFormat
from riq.imaging import (
    PreprocessParams,
    RasterImage,
    decode_ppm,
    equalize_channel,
    gaussian_blur,
    gaussian_kernel1d,
    hsv_to_rgb,
    load_image,
    preprocess,
    resize_bilinear,
    rgb_to_hsv,
    save_pgm,
    save_ppm,
)


def _ppm(w, h, payload, maxval=255):
    return f"P6\n{w} {h}\n{maxval}\n".encode() + bytes(payload)


# -- decoding ---------------------------------------------------------------

def test_ppm_all_255_is_one(tmp_path):
    path = tmp_path / "a.ppm"
    path.write_bytes(_ppm(2, 2, [255] * 12))
    img = load_image(path)
    assert (img.height, img.width, img.channels) == (2, 2, 3)
    assert np.all(img.data == 1.0)


def test_ppm_black_pixel_is_zero(tmp_path):
    path = tmp_path / "b.ppm"
    path.write_bytes(_ppm(1, 1, [0, 0, 0]))
    assert np.all(load_image(path).data == 0.0)


def test_ppm_comments_and_maxval():
    buf = b"P6 # comment\n2 1\n# another\n15\n" + bytes([15, 0, 5, 0, 15, 15])
    arr = decode_ppm(buf)
    assert np.allclose(arr[0, 0], [1.0, 0.0, 1 / 3])
    assert np.allclose(arr[0, 1], [0.0, 1.0, 1.0])


def test_ppm_truncated_payload():
    with pytest.raises(CorruptImage):
        decode_ppm(_ppm(4, 4, [1] * 10))


def test_truncated_png_is_corrupt(tmp_path):
    buf = io.BytesIO()
    Image.fromarray(np.zeros((16, 16, 3), np.uint8)).save(buf, format="PNG")
    path = tmp_path / "t.png"
    path.write_bytes(buf.getvalue()[:40])
    with pytest.raises(CorruptImage):
        load_image(path)


@pytest.mark.parametrize("fmt,suffix", [("PNG", "png"), ("JPEG", "jpg")])
def test_pillow_formats_decode(tmp_path, fmt, suffix):
    rgb = np.zeros((8, 8, 3), np.uint8)
    rgb[..., 0] = 200
    path = tmp_path / f"x.{suffix}"
    Image.fromarray(rgb).save(path, format=fmt, quality=100) if fmt == "JPEG" else Image.fromarray(rgb).save(path)
    img = load_image(path)
    assert img.data.shape == (8, 8, 3)
    assert np.allclose(img.data[..., 0], 200 / 255, atol=2 / 255)


def test_missing_file(tmp_path):
    with pytest.raises(ImageNotFound):
        load_image(tmp_path / "nope.ppm")
    assert issubclass(ImageNotFound, FileNotFoundError)


def test_unsupported_format(tmp_path):
    path = tmp_path / "x.pgm"
    path.write_bytes(b"P5\n1 1\n255\n\x00")
    with pytest.raises(UnsupportedFormat):
        load_image(path)
    path.write_bytes(b"hello world")
    with pytest.raises(UnsupportedFormat):
        load_image(path)


def test_ppm_save_load_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    arr = rng.integers(0, 256, (5, 7, 3)) / 255.0
    save_ppm(arr, tmp_path / "r.ppm")
    assert np.array_equal(load_image(tmp_path / "r.ppm").data, arr)


def test_save_pgm(tmp_path):
    save_pgm(np.array([[0, 1], [255, 7]], np.uint8), tmp_path / "l.pgm")
    raw = (tmp_path / "l.pgm").read_bytes()
    assert raw == b"P5\n2 2\n255\n" + bytes([0, 1, 255, 7])


def test_raster_validation():
    with pytest.raises(ValueError):
        RasterImage(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        RasterImage(np.full((2, 2, 3), 1.5))


# -- colour space -----------------------------------------------------------

@pytest.mark.parametrize("rgb,hsv", [
    ((1, 0, 0), (0, 1, 1)),
    ((0.5, 0.5, 0.5), (0, 0, 0.5)),
    ((0, 1, 0), (120, 1, 1)),
    ((0, 0, 1), (240, 1, 1)),
    ((0, 0, 0), (0, 0, 0)),
])
def test_rgb_to_hsv_examples(rgb, hsv):
    out = rgb_to_hsv(np.array(rgb, float).reshape(1, 1, 3)).data[0, 0]
    assert np.allclose(out, hsv, atol=1e-12)


def test_rgb_to_hsv_matches_colorsys():
    rng = np.random.default_rng(2)
    px = rng.random((200, 3))
    out = rgb_to_hsv(px.reshape(10, 20, 3)).data.reshape(-1, 3)
    ref = np.array([colorsys.rgb_to_hsv(*p) for p in px])
    ref[:, 0] *= 360.0
    assert np.allclose(out, ref, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_hsv_roundtrip(r, g, b):
    rgb = np.array([r, g, b]).reshape(1, 1, 3)
    back = hsv_to_rgb(rgb_to_hsv(rgb).data)
    assert np.max(np.abs(back - rgb)) < 1e-6


# -- preprocessing ----------------------------------------------------------

def test_kernel_sums_to_one():
    for size, sigma in [(5, 1.0), (3, 0.5), (9, 2.5)]:
        assert abs(gaussian_kernel1d(size, sigma).sum() - 1.0) < 1e-12


def test_blur_preserves_constant():
    arr = np.full((20, 30, 3), 0.37)
    assert np.max(np.abs(gaussian_blur(arr) - 0.37)) < 1e-12


def test_resize_constant_and_identity():
    arr = np.full((512, 512, 3), 0.5)
    assert np.allclose(resize_bilinear(arr, 256, 256), 0.5, atol=1e-12)
    rng = np.random.default_rng(3)
    x = rng.random((16, 16, 3))
    assert np.allclose(resize_bilinear(x, 16, 16), x, atol=1e-12)


def test_preprocess_constant_gray_fixed_point():
    img = RasterImage(np.full((512, 512, 3), 0.5))
    out = preprocess(img, PreprocessParams(equalize=False))
    assert (out.height, out.width) == (256, 256)
    assert np.max(np.abs(out.data - 0.5)) < 1e-6


@pytest.mark.parametrize("shape", [(100, 300), (17, 17), (600, 40)])
def test_preprocess_output_size(shape):
    rng = np.random.default_rng(4)
    out = preprocess(RasterImage(rng.random((*shape, 3))))
    assert (out.height, out.width) == (256, 256)


def test_equalize_two_level_cdf():
    v = np.full((256, 256), 0.3)
    v[:, 128:] = 0.6
    eq = equalize_channel(v)
    # hand CDF: half the pixels in bin 77, the rest in bin 153
    assert np.all(eq[:, :128] == 0.5)
    assert np.all(eq[:, 128:] == 1.0)


def test_preprocess_two_level_image():
    hsv = np.zeros((256, 256, 3))
    hsv[..., 2] = 0.3
    hsv[:, 128:, 2] = 0.6
    out = rgb_to_hsv(preprocess(RasterImage(hsv_to_rgb(hsv)))).data[..., 2]
    # away from the seam the blur sees a constant
    assert np.allclose(out[:, :120], 0.5, atol=1e-9)
    assert np.allclose(out[:, 136:], 1.0, atol=1e-9)


def test_preprocess_params_validation():
    with pytest.raises(ValueError):
        PreprocessParams(gaussian_kernel=4)
    with pytest.raises(ValueError):
        PreprocessParams(gaussian_sigma=0)
