"""Image I/O, RGB/HSV conversion and the preprocessing chain.

Images are carried around as float64 arrays of shape ``(height, width, 3)``
with values in ``[0, 1]``.  ``RasterImage`` is a thin wrapper that validates
that contract; the numeric functions accept either the wrapper or a bare
array.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .errors import CorruptImage, ImageNotFound, UnsupportedFormat

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
_JPEG_MAGIC = b"\xff\xd8"


@dataclass(frozen=True, eq=False)
class RasterImage:
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3 or data.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) array, got shape {data.shape}")
        if data.size and (data.min() < 0.0 or data.max() > 1.0):
            raise ValueError("channel values must lie in [0, 1]")
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return 3


@dataclass(frozen=True, eq=False)
class HsvImage:
    """Per-pixel (h in degrees [0, 360), s in [0, 1], v in [0, 1])."""

    data: np.ndarray

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class PreprocessParams:
    target_size: int = 256
    gaussian_sigma: float = 1.0
    gaussian_kernel: int = 5
    equalize: bool = True

    def __post_init__(self):
        if self.target_size < 16:
            raise ValueError("target_size must be >= 16")
        if self.gaussian_kernel < 3 or self.gaussian_kernel % 2 == 0:
            raise ValueError("gaussian_kernel must be odd and >= 3")
        if not self.gaussian_sigma > 0:
            raise ValueError("gaussian_sigma must be > 0")


def _as_array(img) -> np.ndarray:
    if isinstance(img, (RasterImage, HsvImage)):
        return img.data
    return np.asarray(img, dtype=np.float64)


# -- decoding ---------------------------------------------------------------

def _next_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    n = len(buf)
    while pos < n:
        ch = buf[pos:pos + 1]
        if ch == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise CorruptImage("truncated PNM header")
    return buf[start:pos], pos


def decode_ppm(buf: bytes) -> np.ndarray:
    """Decode a binary PPM (P6, maxval <= 255) into a float array."""
    magic, pos = _next_token(buf, 0)
    if magic != b"P6":
        raise UnsupportedFormat(f"unsupported PNM variant {magic!r}")
    try:
        width_tok, pos = _next_token(buf, pos)
        height_tok, pos = _next_token(buf, pos)
        maxval_tok, pos = _next_token(buf, pos)
        width, height, maxval = int(width_tok), int(height_tok), int(maxval_tok)
    except ValueError as exc:
        raise CorruptImage(f"bad PPM header: {exc}") from None
    if width <= 0 or height <= 0 or not 0 < maxval < 256:
        raise CorruptImage(f"bad PPM header values {width}x{height} maxval={maxval}")
    pos += 1  # single whitespace byte after maxval
    need = width * height * 3
    raw = buf[pos:pos + need]
    if len(raw) != need:
        raise CorruptImage(f"PPM payload truncated: {len(raw)} of {need} bytes")
    arr = np.frombuffer(raw, dtype=np.uint8).reshape(height, width, 3)
    return arr.astype(np.float64) / maxval


def _decode_with_pillow(buf: bytes) -> np.ndarray:
    from PIL import Image

    try:
        with Image.open(io.BytesIO(buf)) as im:
            im.load()
            rgb = im.convert("RGB")
            arr = np.asarray(rgb, dtype=np.uint8)
    except Exception as exc:  # Pillow raises a grab bag of types on bad data
        raise CorruptImage(f"cannot decode image: {exc}") from None
    return arr.astype(np.float64) / 255.0


def load_image(path) -> RasterImage:
    path = os.fspath(path)
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except FileNotFoundError:
        raise ImageNotFound(f"no such image: {path}") from None
    except IsADirectoryError:
        raise ImageNotFound(f"not a file: {path}") from None

    if buf.startswith(b"P6"):
        data = decode_ppm(buf)
    elif buf.startswith(_PNG_MAGIC) or buf.startswith(_JPEG_MAGIC):
        data = _decode_with_pillow(buf)
    elif buf[:1] == b"P" and buf[1:2] in b"12345":
        raise UnsupportedFormat(f"{path}: only binary P6 PPM is supported")
    else:
        raise UnsupportedFormat(f"{path}: not a PNG, JPEG or PPM file")
    return RasterImage(data)


def to_bytes(img) -> np.ndarray:
    return np.clip(np.rint(_as_array(img) * 255.0), 0, 255).astype(np.uint8)


def save_ppm(img, path) -> None:
    arr = to_bytes(img)
    h, w = arr.shape[:2]
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(arr.tobytes())


def save_pgm(gray: np.ndarray, path) -> None:
    arr = np.asarray(gray)
    if arr.ndim != 2:
        raise ValueError("PGM expects a 2-D array")
    arr = np.clip(arr, 0, 255).astype(np.uint8)
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(arr.tobytes())


# -- colour space ---------------------------------------------------------

def rgb_to_hsv(img) -> HsvImage:
    """Hexcone RGB -> HSV; hue in degrees, hue of grey pixels is 0."""
    rgb = _as_array(img)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    v = rgb.max(axis=-1)
    mn = rgb.min(axis=-1)
    delta = v - mn
    chroma = delta > 0
    s = np.where(v > 0, delta / np.where(v > 0, v, 1.0), 0.0)

    safe = np.where(chroma, delta, 1.0)
    h = np.zeros_like(v)
    rmax = chroma & (r == v)
    gmax = chroma & (g == v) & ~rmax
    bmax = chroma & ~rmax & ~gmax
    h = np.where(rmax, np.mod((g - b) / safe, 6.0), h)
    h = np.where(gmax, (b - r) / safe + 2.0, h)
    h = np.where(bmax, (r - g) / safe + 4.0, h)
    h = h * 60.0
    h = np.where(h >= 360.0, h - 360.0, h)
    s = np.where(chroma, s, 0.0)
    return HsvImage(np.stack([h, s, v], axis=-1))


def hsv_to_rgb(hsv) -> np.ndarray:
    arr = _as_array(hsv)
    h, s, v = arr[..., 0], arr[..., 1], arr[..., 2]
    hp = np.mod(h, 360.0) / 60.0
    c = v * s
    x = c * (1.0 - np.abs(np.mod(hp, 2.0) - 1.0))
    m = v - c
    sector = np.floor(hp).astype(np.int64) % 6
    zero = np.zeros_like(c)
    r = np.choose(sector, [c, x, zero, zero, x, c])
    g = np.choose(sector, [x, c, c, x, zero, zero])
    b = np.choose(sector, [zero, zero, x, c, c, x])
    return np.clip(np.stack([r + m, g + m, b + m], axis=-1), 0.0, 1.0)


# -- preprocessing --------------------------------------------------------

def _interp_matrix(n_out: int, n_in: int) -> np.ndarray:
    """Row-stochastic bilinear interpolation matrix (pixel-centre aligned)."""
    pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    pos = np.clip(pos, 0.0, n_in - 1)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = pos - lo
    m = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    np.add.at(m, (rows, lo), 1.0 - frac)
    np.add.at(m, (rows, hi), frac)
    return m


def resize_bilinear(arr: np.ndarray, height: int, width: int) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    ry = _interp_matrix(height, arr.shape[0])
    rx = _interp_matrix(width, arr.shape[1])
    if arr.ndim == 2:
        return ry @ arr @ rx.T
    return np.einsum("ij,jkc,lk->ilc", ry, arr, rx, optimize=True)


def equalize_channel(v: np.ndarray) -> np.ndarray:
    """256-bin histogram equalisation: each value becomes its bin's CDF."""
    bins = np.clip(np.rint(v * 255.0), 0, 255).astype(np.int64)
    hist = np.bincount(bins.ravel(), minlength=256)
    cdf = np.cumsum(hist) / bins.size
    return cdf[bins]


def gaussian_kernel1d(size: int, sigma: float) -> np.ndarray:
    half = size // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    w = np.exp(-0.5 * (x / sigma) ** 2)
    return w / w.sum()


def gaussian_blur(arr: np.ndarray, size: int = 5, sigma: float = 1.0) -> np.ndarray:
    """Separable Gaussian blur per channel with replicated borders."""
    k = gaussian_kernel1d(size, sigma)
    out = correlate1d(arr, k, axis=0, mode="nearest")
    return correlate1d(out, k, axis=1, mode="nearest")


def preprocess(img, p: PreprocessParams | None = None) -> RasterImage:
    """Resize to a square, equalise V, blur; the order is fixed."""
    p = p or PreprocessParams()
    rgb = resize_bilinear(_as_array(img), p.target_size, p.target_size)
    rgb = np.clip(rgb, 0.0, 1.0)
    if p.equalize:
        hsv = rgb_to_hsv(rgb).data.copy()
        hsv[..., 2] = equalize_channel(hsv[..., 2])
        rgb = hsv_to_rgb(hsv)
    rgb = gaussian_blur(rgb, p.gaussian_kernel, p.gaussian_sigma)
    return RasterImage(np.clip(rgb, 0.0, 1.0))
