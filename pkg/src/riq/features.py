"""Region descriptors: colour moments, Haar approximation coefficients, normalisation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyRegion, EmptyTrainingSet, IncompatibleSize, OddSide
from .imaging import HsvImage, resize_bilinear
from .segmentation import Region

PATCH_SIDE = 64
DWT_LEVELS = 3
N_MOMENTS = 9
FEATURE_LENGTH = N_MOMENTS + 3 * (PATCH_SIDE >> DWT_LEVELS) ** 2  # 201

_SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class ColorMoments:
    mean: np.ndarray  # (3,) per channel H, S, V
    std: np.ndarray
    skew: np.ndarray

    def as_vector(self) -> np.ndarray:
        """Channel-major layout: (mu_H, sigma_H, s_H, mu_S, ..., s_V)."""
        return np.stack([self.mean, self.std, self.skew], axis=1).ravel()


@dataclass(frozen=True, eq=False)
class WaveletPyramid:
    approx: list[np.ndarray]  # approx[0] is the input, approx[l] the level-l band
    details: list[tuple[np.ndarray, np.ndarray, np.ndarray]]  # (Dh, Dv, Dd) per level 1..L

    @property
    def levels(self) -> int:
        return len(self.details)


def color_moments(pixels) -> ColorMoments:
    """Mean, population std and signed-cube-root skewness per channel.

    ``pixels`` is an ``(n, 3)`` array with hue already scaled to [0, 1].
    """
    px = np.asarray(pixels, dtype=np.float64).reshape(-1, 3)
    if len(px) == 0:
        raise EmptyRegion("cannot compute moments of an empty pixel set")
    mean = px.mean(axis=0)
    # a constant channel has mean exactly equal to its value; summation can drift by an ulp
    mean = np.where(np.ptp(px, axis=0) == 0, px[0], mean)
    dev = px - mean
    std = np.sqrt((dev ** 2).mean(axis=0))
    skew = np.cbrt((dev ** 3).mean(axis=0))
    return ColorMoments(mean, std, skew)


def haar_dwt2(patch):
    """One level of the orthonormal 2-D Haar analysis.

    Rows are filtered first, then columns.  Returns ``(A, Dh, Dv, Dd)`` where
    ``Dv`` responds to variation along a row (vertical edges) and ``Dh`` to
    variation down a column.
    """
    x = np.asarray(patch, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise IncompatibleSize(f"expected a square grid, got {x.shape}")
    if x.shape[0] % 2:
        raise OddSide(f"side {x.shape[0]} is odd")
    lo = (x[:, 0::2] + x[:, 1::2]) / _SQRT2
    hi = (x[:, 0::2] - x[:, 1::2]) / _SQRT2
    a = (lo[0::2] + lo[1::2]) / _SQRT2
    dh = (lo[0::2] - lo[1::2]) / _SQRT2
    dv = (hi[0::2] + hi[1::2]) / _SQRT2
    dd = (hi[0::2] - hi[1::2]) / _SQRT2
    return a, dh, dv, dd


def haar_idwt2(a, dh, dv, dd) -> np.ndarray:
    a, dh, dv, dd = (np.asarray(t, dtype=np.float64) for t in (a, dh, dv, dd))
    n = a.shape[0]
    lo = np.empty((2 * n, n))
    hi = np.empty((2 * n, n))
    lo[0::2] = (a + dh) / _SQRT2
    lo[1::2] = (a - dh) / _SQRT2
    hi[0::2] = (dv + dd) / _SQRT2
    hi[1::2] = (dv - dd) / _SQRT2
    x = np.empty((2 * n, 2 * n))
    x[:, 0::2] = (lo + hi) / _SQRT2
    x[:, 1::2] = (lo - hi) / _SQRT2
    return x


def dwt_multilevel(patch, levels: int) -> WaveletPyramid:
    x = np.asarray(patch, dtype=np.float64)
    if levels < 0:
        raise ValueError("levels must be >= 0")
    if x.ndim != 2 or x.shape[0] != x.shape[1] or x.shape[0] % (1 << levels):
        raise IncompatibleSize(f"side of {x.shape} is not divisible by 2**{levels}")
    approx = [x]
    details = []
    for _ in range(levels):
        a, dh, dv, dd = haar_dwt2(approx[-1])
        approx.append(a)
        details.append((dh, dv, dd))
    return WaveletPyramid(approx, details)


def idwt_multilevel(pyr: WaveletPyramid) -> np.ndarray:
    x = pyr.approx[-1]
    for dh, dv, dd in reversed(pyr.details):
        x = haar_idwt2(x, dh, dv, dd)
    return x


def _hsv_array(img) -> np.ndarray:
    return img.data if isinstance(img, HsvImage) else np.asarray(img, dtype=np.float64)


def region_pixels(img, r: Region) -> np.ndarray:
    """Masked HSV pixels of a region with hue scaled to [0, 1]."""
    px = _hsv_array(img)[r.mask]
    if len(px) == 0:
        raise EmptyRegion("region has no pixels")
    px = px.copy()
    px[:, 0] /= 360.0
    return px


def region_to_patch(img, r: Region, side: int = PATCH_SIDE) -> np.ndarray:
    """Crop the bbox, fill off-mask pixels with the region mean, resize to side x side.

    Returns an array of shape ``(3, side, side)`` in H, S, V order with H in [0, 1].
    """
    if side <= 0 or side & (side - 1):
        raise ValueError("patch side must be a power of two")
    top, left, bottom, right = r.bbox
    hsv = _hsv_array(img)
    crop = hsv[top:bottom + 1, left:right + 1].copy()
    crop[..., 0] /= 360.0
    mask = r.mask[top:bottom + 1, left:right + 1]
    if not mask.any():
        raise EmptyRegion("region has no pixels")
    mean = crop[mask].mean(axis=0)
    crop[~mask] = mean
    patch = resize_bilinear(crop, side, side)
    return np.ascontiguousarray(np.moveaxis(patch, -1, 0))


def extract_region_features(img, r: Region, side: int = PATCH_SIDE,
                            levels: int = DWT_LEVELS) -> np.ndarray:
    moments = color_moments(region_pixels(img, r)).as_vector()
    patch = region_to_patch(img, r, side)
    approx = [dwt_multilevel(patch[ch], levels).approx[-1].ravel() for ch in range(3)]
    return np.concatenate([moments, *approx])


# -- normalisation ----------------------------------------------------------

NORMALIZER_MODES = ("zscore", "unit")


@dataclass(frozen=True, eq=False)
class Normalizer:
    mean: np.ndarray
    std: np.ndarray
    mode: str = "unit"

    def __post_init__(self):
        if self.mode not in NORMALIZER_MODES:
            raise ValueError(f"unknown normaliser mode {self.mode!r}")

    @property
    def dim(self) -> int:
        return len(self.mean)


def fit_normalizer(training, mode: str = "unit") -> Normalizer:
    x = np.asarray(training, dtype=np.float64)
    if x.size == 0:
        raise EmptyTrainingSet("cannot fit a normaliser on no vectors")
    x = x.reshape(len(x), -1)
    mean = x.mean(axis=0)
    std = np.sqrt(((x - mean) ** 2).mean(axis=0))
    return Normalizer(mean, std, mode)


def apply_normalizer(nz: Normalizer, v) -> np.ndarray:
    """Z-score (``zscore``) or the 3-sigma rescaling into [0, 1] (``unit``).

    Works on one vector or a batch; zero-variance dimensions map to 0 / 0.5.
    """
    x = np.asarray(v, dtype=np.float64)
    if x.shape[-1] != nz.dim:
        raise DimensionMismatch(f"expected {nz.dim} features, got {x.shape[-1]}")
    # only exact zero variance takes the convention; NaN propagates
    flat = nz.std == 0
    safe = np.where(flat, 1.0, nz.std)
    if nz.mode == "zscore":
        return np.where(flat, 0.0, (x - nz.mean) / safe)
    return np.where(flat, 0.5, ((x - nz.mean) / (3.0 * safe) + 1.0) / 2.0)
