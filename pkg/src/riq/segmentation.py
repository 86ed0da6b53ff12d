"""Mean-shift colour segmentation in a cone embedding of HSV.

Pixels are mapped to ``(s*v*cos h, s*v*sin h, v)`` so that Euclidean
distance respects hue wrap-around and all achromatic pixels of equal value
coincide.  A flat-kernel mean shift started from seeded random pixels finds
the colour palette; pixels are labelled by their nearest palette entry and
4-connected components below the area threshold are discarded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import _accel
from ._accel import njit
from .errors import EmptyInput
from .imaging import HsvImage, RasterImage, rgb_to_hsv


@dataclass(frozen=True)
class SegmentationParams:
    radius: float = 0.10
    min_color_count: int = 50
    min_region_fraction: float = 0.05
    n_windows: int = 64
    max_iters: int = 100
    conv_eps: float = 1e-4
    rng_seed: int = 0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be > 0")
        if not 0 < self.min_region_fraction < 1:
            raise ValueError("min_region_fraction must lie in (0, 1)")
        if self.n_windows < 1:
            raise ValueError("n_windows must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.conv_eps > 0:
            raise ValueError("conv_eps must be > 0")
        if self.min_color_count < 0:
            raise ValueError("min_color_count must be >= 0")

    def describe(self) -> str:
        return (
            f"radius={self.radius!r} min_color_count={self.min_color_count} "
            f"min_region_fraction={self.min_region_fraction!r} n_windows={self.n_windows} "
            f"max_iters={self.max_iters} conv_eps={self.conv_eps!r} rng_seed={self.rng_seed}"
        )


@dataclass(frozen=True, eq=False)
class Palette:
    modes: np.ndarray  # (k, 3)
    counts: np.ndarray  # (k,)

    def __len__(self):
        return len(self.modes)


@dataclass(frozen=True, eq=False)
class Region:
    label: int
    mask: np.ndarray  # full-image boolean mask
    area: int
    bbox: tuple[int, int, int, int]  # top, left, bottom, right (inclusive)

    def pixels(self) -> np.ndarray:
        return np.argwhere(self.mask)


@dataclass(frozen=True, eq=False)
class MeanShiftResult:
    palette: Palette
    trajectories: list[np.ndarray]  # per window, iterates including the start


def cone_embedding(hsv) -> np.ndarray:
    """Map HSV pixels (h in degrees) to points in the unit cone, shape (..., 3)."""
    arr = hsv.data if isinstance(hsv, HsvImage) else np.asarray(hsv, dtype=np.float64)
    h = np.deg2rad(arr[..., 0])
    sv = arr[..., 1] * arr[..., 2]
    return np.stack([sv * np.cos(h), sv * np.sin(h), arr[..., 2]], axis=-1)


# -- kernels ----------------------------------------------------------------

@njit(cache=True, nogil=True)
def _build_grid(points, weights, cell_min):
    """Counting-sort points into a uniform grid whose cells are >= cell_min wide."""
    n = points.shape[0]
    lo = np.empty(3)
    cell = np.empty(3)
    dims = np.empty(3, dtype=np.int64)
    for a in range(3):
        mn = points[0, a]
        mx = points[0, a]
        for i in range(n):
            v = points[i, a]
            if v < mn:
                mn = v
            if v > mx:
                mx = v
        lo[a] = mn
        cell[a] = max(cell_min, (mx - mn) / 64.0)
        dims[a] = int(np.floor((mx - mn) / cell[a])) + 1
    n_cells = dims[0] * dims[1] * dims[2]
    cid = np.empty(n, dtype=np.int64)
    starts = np.zeros(n_cells + 1, dtype=np.int64)
    for i in range(n):
        i0 = min(int(np.floor((points[i, 0] - lo[0]) / cell[0])), dims[0] - 1)
        i1 = min(int(np.floor((points[i, 1] - lo[1]) / cell[1])), dims[1] - 1)
        i2 = min(int(np.floor((points[i, 2] - lo[2]) / cell[2])), dims[2] - 1)
        c = (i0 * dims[1] + i1) * dims[2] + i2
        cid[i] = c
        starts[c + 1] += 1
    for c in range(n_cells):
        starts[c + 1] += starts[c]
    fill = starts[:-1].copy()
    spts = np.empty_like(points)
    sw = np.empty_like(weights)
    for i in range(n):
        j = fill[cid[i]]
        fill[cid[i]] += 1
        spts[j, 0] = points[i, 0]
        spts[j, 1] = points[i, 1]
        spts[j, 2] = points[i, 2]
        sw[j] = weights[i]
    return spts, sw, lo, cell, dims, starts


@njit(cache=True, nogil=True)
def _ball_sum(spts, sw, lo, cell, dims, starts, x0, x1, x2, r2):
    """Weighted sum and total weight of grid points within sqrt(r2) of x."""
    c0 = int(np.floor((x0 - lo[0]) / cell[0]))
    c1 = int(np.floor((x1 - lo[1]) / cell[1]))
    c2 = int(np.floor((x2 - lo[2]) / cell[2]))
    s0 = 0.0
    s1 = 0.0
    s2 = 0.0
    tot = 0.0
    for i0 in range(max(c0 - 1, 0), min(c0 + 2, dims[0])):
        for i1 in range(max(c1 - 1, 0), min(c1 + 2, dims[1])):
            base = (i0 * dims[1] + i1) * dims[2]
            k_lo = max(c2 - 1, 0)
            k_hi = min(c2 + 2, dims[2])
            if k_lo >= k_hi:
                continue
            # cells along the last axis are contiguous in the sorted arrays
            for i in range(starts[base + k_lo], starts[base + k_hi]):
                d0 = spts[i, 0] - x0
                d1 = spts[i, 1] - x1
                d2 = spts[i, 2] - x2
                if d0 * d0 + d1 * d1 + d2 * d2 <= r2:
                    c = sw[i]
                    s0 += c * spts[i, 0]
                    s1 += c * spts[i, 1]
                    s2 += c * spts[i, 2]
                    tot += c
    return s0, s1, s2, tot


@njit(cache=True, nogil=True)
def _shift_windows_nb(points, weights, starts, radius, max_iters, eps, traj, n_steps):
    r2 = radius * radius
    spts, sw, lo, cell, dims, cstart = _build_grid(points, weights, radius)
    for w in range(starts.shape[0]):
        x0 = starts[w, 0]
        x1 = starts[w, 1]
        x2 = starts[w, 2]
        traj[w, 0, 0] = x0
        traj[w, 0, 1] = x1
        traj[w, 0, 2] = x2
        k = 0
        while k < max_iters:
            s0, s1, s2, tot = _ball_sum(spts, sw, lo, cell, dims, cstart, x0, x1, x2, r2)
            if tot == 0.0:
                break
            y0 = s0 / tot
            y1 = s1 / tot
            y2 = s2 / tot
            shift = np.sqrt((y0 - x0) ** 2 + (y1 - x1) ** 2 + (y2 - x2) ** 2)
            k += 1
            traj[w, k, 0] = y0
            traj[w, k, 1] = y1
            traj[w, k, 2] = y2
            x0 = y0
            x1 = y1
            x2 = y2
            if shift < eps:
                break
        n_steps[w] = k


def _shift_windows_np(points, weights, starts, radius, max_iters, eps, traj, n_steps):
    r2 = radius * radius
    x = starts.copy()
    traj[:, 0] = x
    active = np.ones(len(starts), dtype=bool)
    for k in range(1, max_iters + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        xa = x[idx]
        d2 = ((points[:, None, 0] - xa[None, :, 0]) ** 2
              + (points[:, None, 1] - xa[None, :, 1]) ** 2
              + (points[:, None, 2] - xa[None, :, 2]) ** 2)
        wmask = (d2 <= r2) * weights[:, None]
        sw = wmask.sum(axis=0)
        empty = sw == 0.0
        n_steps[idx[empty]] = k - 1
        active[idx[empty]] = False
        keep = ~empty
        idx, xa, wmask, sw = idx[keep], xa[keep], wmask[:, keep], sw[keep]
        y = (wmask.T @ points) / sw[:, None]
        shift = np.sqrt(((y - xa) ** 2).sum(axis=1))
        x[idx] = y
        traj[idx, k] = y
        n_steps[idx] = k
        done = shift < eps
        active[idx[done]] = False


@njit(cache=True, nogil=True)
def _ball_weights_nb(points, weights, centers, radius):
    spts, sw, lo, cell, dims, cstart = _build_grid(points, weights, radius)
    out = np.zeros(centers.shape[0])
    for j in range(centers.shape[0]):
        out[j] = _ball_sum(spts, sw, lo, cell, dims, cstart,
                           centers[j, 0], centers[j, 1], centers[j, 2], radius * radius)[3]
    return out


def _ball_weights_np(points, weights, centers, radius):
    d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return ((d2 <= radius * radius) * weights[:, None]).sum(axis=0)


@njit(cache=True, nogil=True)
def _label_components_nb(labels):
    """4-connected components of equal label via an explicit-stack flood fill."""
    h, w = labels.shape
    comp = -np.ones((h, w), dtype=np.int64)
    stack = np.empty(h * w, dtype=np.int64)
    n_comp = 0
    for r0 in range(h):
        for c0 in range(w):
            if comp[r0, c0] >= 0:
                continue
            lab = labels[r0, c0]
            comp[r0, c0] = n_comp
            top = 0
            stack[top] = r0 * w + c0
            top += 1
            while top > 0:
                top -= 1
                p = stack[top]
                r = p // w
                c = p - r * w
                if r > 0 and comp[r - 1, c] < 0 and labels[r - 1, c] == lab:
                    comp[r - 1, c] = n_comp
                    stack[top] = p - w
                    top += 1
                if r < h - 1 and comp[r + 1, c] < 0 and labels[r + 1, c] == lab:
                    comp[r + 1, c] = n_comp
                    stack[top] = p + w
                    top += 1
                if c > 0 and comp[r, c - 1] < 0 and labels[r, c - 1] == lab:
                    comp[r, c - 1] = n_comp
                    stack[top] = p - 1
                    top += 1
                if c < w - 1 and comp[r, c + 1] < 0 and labels[r, c + 1] == lab:
                    comp[r, c + 1] = n_comp
                    stack[top] = p + 1
                    top += 1
            n_comp += 1
    return comp, n_comp


_FOUR = ndimage.generate_binary_structure(2, 1)


def _label_components_np(labels):
    comp = -np.ones(labels.shape, dtype=np.int64)
    n_comp = 0
    for lab in np.unique(labels):
        cc, n = ndimage.label(labels == lab, structure=_FOUR)
        sel = cc > 0
        comp[sel] = cc[sel] - 1 + n_comp
        n_comp += n
    return comp, n_comp


def _kernels():
    if _accel.USE_NUMBA:
        return _shift_windows_nb, _ball_weights_nb, _label_components_nb
    return _shift_windows_np, _ball_weights_np, _label_components_np


# -- operations ---------------------------------------------------------------

def epanechnikov_density(points, weights, x, radius) -> float:
    """Count-weighted density under the shadow kernel of the flat kernel.

    Flat-kernel mean shift is gradient ascent on this estimate, so it never
    decreases along an iterate sequence.
    """
    d2 = ((np.asarray(points) - np.asarray(x)) ** 2).sum(axis=-1) / (radius * radius)
    return float((np.asarray(weights) * np.clip(1.0 - d2, 0.0, None)).sum())


def _dedupe(points: np.ndarray):
    uniq, counts = np.unique(points, axis=0, return_counts=True)
    return np.ascontiguousarray(uniq), counts.astype(np.float64)


def _merge_modes(modes: np.ndarray, support: np.ndarray, min_dist: float):
    """Greedy weighted merge in window order, repeated until all pairs are >= min_dist apart."""
    centers = [m.copy() for m in modes]
    weights = [float(s) for s in support]
    while True:
        out_c: list[np.ndarray] = []
        out_w: list[float] = []
        for c, w in zip(centers, weights):
            for j, oc in enumerate(out_c):
                if np.linalg.norm(c - oc) < min_dist:
                    tot = out_w[j] + w
                    if tot > 0:
                        out_c[j] = (oc * out_w[j] + c * w) / tot
                    out_w[j] = tot
                    break
            else:
                out_c.append(c.copy())
                out_w.append(w)
        if len(out_c) == len(centers):
            return np.array(out_c).reshape(-1, 3)
        centers, weights = out_c, out_w


def mean_shift(points, p: SegmentationParams, weights=None) -> MeanShiftResult:
    """Run the seeded window search and return the palette plus each window's path."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        raise EmptyInput("mean shift needs at least one point")
    if weights is None:
        rng = np.random.default_rng(p.rng_seed)
        starts = pts[rng.integers(0, len(pts), size=p.n_windows)]
        upts, uw = _dedupe(pts)
    else:
        w = np.asarray(weights, dtype=np.float64).reshape(-1)
        rng = np.random.default_rng(p.rng_seed)
        starts = pts[rng.choice(len(pts), size=p.n_windows, p=w / w.sum())]
        upts, uw = np.ascontiguousarray(pts), w
    starts = np.ascontiguousarray(starts)

    shift_windows, ball_weights, _ = _kernels()
    traj = np.zeros((p.n_windows, p.max_iters + 1, 3))
    n_steps = np.zeros(p.n_windows, dtype=np.int64)
    shift_windows(upts, uw, starts, float(p.radius), int(p.max_iters), float(p.conv_eps), traj, n_steps)
    finals = traj[np.arange(p.n_windows), n_steps]
    support = ball_weights(upts, uw, np.ascontiguousarray(finals), float(p.radius))

    merged = _merge_modes(finals, support, p.radius / 2.0)
    counts = ball_weights(upts, uw, np.ascontiguousarray(merged), float(p.radius))
    keep = counts >= p.min_color_count
    if keep.any():
        modes, counts = merged[keep], counts[keep]
    else:
        total = uw.sum()
        modes = ((upts * uw[:, None]).sum(axis=0) / total)[None, :]
        counts = np.array([total])
    paths = [traj[i, : n_steps[i] + 1].copy() for i in range(p.n_windows)]
    return MeanShiftResult(Palette(modes, counts), paths)


def mean_shift_modes(points, p: SegmentationParams) -> Palette:
    return mean_shift(points, p).palette


def assign_to_palette(points, pal: Palette) -> np.ndarray:
    """Index of the nearest mode per point; ties go to the lowest index."""
    pts = np.asarray(points, dtype=np.float64)
    shape = pts.shape[:-1]
    flat = pts.reshape(-1, 3)
    modes = np.asarray(pal.modes, dtype=np.float64)
    if len(modes) == 0:
        raise ValueError("palette is empty")
    best = np.zeros(len(flat), dtype=np.int64)
    best_d = np.full(len(flat), np.inf)
    for j, m in enumerate(modes):
        d = ((flat - m) ** 2).sum(axis=1)
        closer = d < best_d
        best[closer] = j
        best_d[closer] = d[closer]
    return best.reshape(shape)


def label_components(labels) -> tuple[np.ndarray, int]:
    lab = np.ascontiguousarray(np.asarray(labels, dtype=np.int64))
    return _kernels()[2](lab)


def extract_regions(labels, p: SegmentationParams) -> list[Region]:
    lab = np.asarray(labels, dtype=np.int64)
    if lab.ndim != 2:
        raise ValueError("label grid must be 2-D")
    comp, n_comp = label_components(lab)
    total = lab.size
    if n_comp == 0:
        return []
    areas = np.bincount(comp.ravel(), minlength=n_comp)
    threshold = p.min_region_fraction * total
    regions = []
    for cid in np.flatnonzero(areas >= threshold):
        mask = comp == cid
        rows = np.flatnonzero(mask.any(axis=1))
        cols = np.flatnonzero(mask.any(axis=0))
        bbox = (int(rows[0]), int(cols[0]), int(rows[-1]), int(cols[-1]))
        label = int(lab[rows[0], cols[np.argmax(mask[rows[0], cols])]])
        regions.append(Region(label, mask, int(areas[cid]), bbox))
    regions.sort(key=lambda r: (-r.area, r.bbox[0], r.bbox[1]))
    return regions


def segment_labels(img, p: SegmentationParams) -> tuple[list[Region], np.ndarray, Palette]:
    """Full segmentation returning regions, the per-pixel palette labels and the palette."""
    hsv = img if isinstance(img, HsvImage) else rgb_to_hsv(img)
    pts = cone_embedding(hsv)
    pal = mean_shift_modes(pts.reshape(-1, 3), p)
    labels = assign_to_palette(pts, pal)
    return extract_regions(labels, p), labels, pal


def segment(img: RasterImage, p: SegmentationParams) -> list[Region]:
    return segment_labels(img, p)[0]


def region_label_map(regions: list[Region], shape) -> np.ndarray:
    """uint8 map: region index for pixels in a significant region, 255 elsewhere."""
    out = np.full(shape, 255, dtype=np.uint8)
    for i, r in enumerate(regions[:255]):
        out[r.mask] = i
    return out
