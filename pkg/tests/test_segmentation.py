from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riq.errors import EmptyInput
from riq.imaging import RasterImage, rgb_to_hsv
from riq.segmentation import (
    Palette,
    SegmentationParams,
    _dedupe,
    assign_to_palette,
    cone_embedding,
    epanechnikov_density,
    extract_regions,
    label_components,
    mean_shift,
    mean_shift_modes,
    region_label_map,
    segment,
    segment_labels,
)

P = SegmentationParams()


def flood_fill_oracle(labels):
    """Plain BFS 4-connected component areas, sorted descending."""
    h, w = labels.shape
    seen = np.zeros((h, w), bool)
    areas = []
    for y in range(h):
        for x in range(w):
            if seen[y, x]:
                continue
            seen[y, x] = True
            q = deque([(y, x)])
            n = 0
            while q:
                cy, cx = q.popleft()
                n += 1
                for ny, nx in ((cy - 1, cx), (cy + 1, cx), (cy, cx - 1), (cy, cx + 1)):
                    if 0 <= ny < h and 0 <= nx < w and not seen[ny, nx] and labels[ny, nx] == labels[cy, cx]:
                        seen[ny, nx] = True
                        q.append((ny, nx))
            areas.append(n)
    return sorted(areas, reverse=True)


def three_gaussians(seed=0, radius=P.radius):
    rng = np.random.default_rng(seed)
    hsv_centers = np.array([[0.0, 0.8, 0.9], [120.0, 0.7, 0.6], [240.0, 0.6, 0.4]])
    centers = cone_embedding(hsv_centers[None]).reshape(-1, 3)
    pts = np.concatenate([c + rng.normal(0, radius / 4, (1000, 3)) for c in centers])
    return centers, pts


# -- cone embedding -----------------------------------------------------------

def test_cone_embedding_values():
    e = cone_embedding(np.array([[[0.0, 1.0, 1.0], [90.0, 0.5, 0.8], [123.0, 0.0, 0.3]]]))[0]
    assert np.allclose(e[0], [1, 0, 1])
    assert np.allclose(e[1], [0, 0.4, 0.8], atol=1e-15)
    assert np.allclose(e[2], [0, 0, 0.3])


# -- mean shift -------------------------------------------------------------

def test_identical_points_single_mode(backend):
    q = np.array([0.3, -0.2, 0.7])
    pal = mean_shift_modes(np.tile(q, (200, 1)), P)
    assert len(pal) == 1
    assert np.array_equal(pal.modes[0], q)


def test_two_separated_clusters(backend):
    a = np.array([0.0, 0.0, 0.5])
    b = a + np.array([5 * P.radius, 0, 0])
    pts = np.concatenate([np.tile(a, (500, 1)), np.tile(b, (500, 1))])
    pal = mean_shift_modes(pts, P)
    assert len(pal) == 2
    got = sorted(map(tuple, pal.modes))
    assert np.allclose(got, sorted([tuple(a), tuple(b)]), atol=1e-12)
    assert np.array_equal(np.sort(pal.counts), [500, 500])


def _kde_peak(pts, center, radius):
    """Brute-force grid search of a Gaussian KDE around ``center``."""
    ax = np.linspace(-0.05, 0.05, 11)
    grid = center + np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), -1).reshape(-1, 3)
    d2 = ((grid[:, None, :] - pts[None]) ** 2).sum(-1)
    dens = np.exp(-d2 / (2 * (radius / 4) ** 2)).sum(1)
    return grid[np.argmax(dens)]


def test_three_gaussians(backend):
    centers, pts = three_gaussians()
    pal = mean_shift_modes(pts, P)
    assert len(pal) == 3
    for c in centers:
        peak = _kde_peak(pts, c, P.radius)
        assert np.linalg.norm(peak - c) < 0.05
        d = np.linalg.norm(pal.modes - c, axis=1)
        assert d.min() < 0.05


def test_iterate_density_monotone(backend):
    _, pts = three_gaussians(seed=3)
    res = mean_shift(pts, P)
    upts, w = _dedupe(pts)
    for path in res.trajectories:
        dens = [epanechnikov_density(upts, w, x, P.radius) for x in path]
        assert all(b >= a - 1e-9 for a, b in zip(dens, dens[1:]))


def test_palette_modes_separated_and_supported():
    _, pts = three_gaussians(seed=5)
    pal = mean_shift_modes(pts, P)
    d = np.linalg.norm(pal.modes[:, None] - pal.modes[None], axis=-1)
    assert np.all(d[~np.eye(len(pal), dtype=bool)] >= P.radius / 2)
    assert np.all(pal.counts >= P.min_color_count)


def test_all_pruned_falls_back_to_global_mean():
    rng = np.random.default_rng(0)
    pts = rng.random((30, 3))
    pal = mean_shift_modes(pts, SegmentationParams(min_color_count=1000))
    assert len(pal) == 1
    assert np.allclose(pal.modes[0], pts.mean(0))


def test_empty_input():
    with pytest.raises(EmptyInput):
        mean_shift_modes(np.zeros((0, 3)), P)


def test_backends_agree(monkeypatch):
    from riq import _accel
    if not _accel.HAVE_NUMBA:
        pytest.skip("numba not available")
    _, pts = three_gaussians(seed=7)
    out = {}
    for flag in (True, False):
        monkeypatch.setattr(_accel, "USE_NUMBA", flag)
        out[flag] = mean_shift_modes(pts, P)
    assert len(out[True]) == len(out[False])
    assert np.allclose(out[True].modes, out[False].modes, atol=1e-9)
    assert np.array_equal(out[True].counts, out[False].counts)
    rng = np.random.default_rng(1)
    lab = rng.integers(0, 3, (60, 70))
    comps = {}
    for flag in (True, False):
        monkeypatch.setattr(_accel, "USE_NUMBA", flag)
        comps[flag] = label_components(lab)
    assert comps[True][1] == comps[False][1]
    # same partition, labels may be numbered differently
    a, b = comps[True][0].ravel(), comps[False][0].ravel()
    pairs = set(zip(a.tolist(), b.tolist()))
    assert len(pairs) == comps[True][1]


# -- assignment -------------------------------------------------------------

def test_assign_exact_and_tie():
    pal = Palette(np.array([[0.0, 0, 0], [1.0, 0, 0], [0, 1.0, 0]]), np.ones(3))
    assert assign_to_palette(np.array([[0, 1.0, 0]]), pal)[0] == 2
    assert assign_to_palette(np.array([[0.5, 0, 0]]), pal)[0] == 0


def test_assign_matches_bruteforce():
    a, b = np.array([0.0, 0.0, 0.5]), np.array([0.5, 0.0, 0.5])
    rng = np.random.default_rng(2)
    pts = np.concatenate([a + rng.normal(0, 0.02, (500, 3)), b + rng.normal(0, 0.02, (500, 3))])
    truth = np.repeat([0, 1], 500)
    pal = mean_shift_modes(pts, P)
    lab = assign_to_palette(pts, pal)
    oracle = np.array([np.argmin([np.sum((p - m) ** 2) for m in pal.modes]) for p in pts])
    assert np.array_equal(lab, oracle)
    mapping = {lab[0]: 0, lab[-1]: 1}
    assert np.array_equal(np.vectorize(mapping.get)(lab), truth)


# -- regions ----------------------------------------------------------------

def test_uniform_grid_one_region(backend):
    regs = extract_regions(np.zeros((40, 50), int), P)
    assert len(regs) == 1
    assert regs[0].area == 2000 and regs[0].bbox == (0, 0, 39, 49)


def test_small_island_pruned(backend):
    lab = np.zeros((256, 256), int)
    lab[100:110, 100:110] = 1
    regs = extract_regions(lab, P)
    assert len(regs) == 1
    assert regs[0].area == 65536 - 100


def test_checkerboard_blocks(backend):
    yy, xx = np.mgrid[0:256, 0:256]
    lab = ((yy // 128) + (xx // 128)) % 2
    regs = extract_regions(lab, P)
    assert [r.area for r in regs] == flood_fill_oracle(lab) == [16384] * 4
    assert [r.bbox[:2] for r in regs] == [(0, 0), (0, 128), (128, 0), (128, 128)]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 4))
def test_components_match_oracle(seed, k):
    rng = np.random.default_rng(seed)
    lab = rng.integers(0, k, (24, 31))
    comp, n = label_components(lab)
    areas = sorted(np.bincount(comp.ravel(), minlength=n).tolist(), reverse=True)
    assert areas == flood_fill_oracle(lab)
    regs = extract_regions(lab, SegmentationParams(min_region_fraction=0.01))
    assert [r.area for r in regs] == [a for a in flood_fill_oracle(lab) if a >= 0.01 * lab.size]


# -- full segmentation --------------------------------------------------------

def _half_red_blue():
    img = np.zeros((256, 256, 3))
    img[:, :128, 0] = 1.0
    img[:, 128:, 2] = 1.0
    return RasterImage(img)


def test_constant_image_one_region(backend):
    regs = segment(RasterImage(np.full((64, 64, 3), [0.2, 0.5, 0.9])), P)
    assert len(regs) == 1 and regs[0].area == 64 * 64


def test_half_red_blue(backend):
    img = _half_red_blue()
    regs = segment(img, P)
    assert [r.area for r in regs] == [32768, 32768]
    # brute-force 2-means on the two distinct feature points puts each half in its own cluster
    pts = cone_embedding(rgb_to_hsv(img)).reshape(-1, 3)
    uniq = np.unique(pts, axis=0)
    assert len(uniq) == 2
    assert regs[0].mask[:, :128].all() and regs[1].mask[:, 128:].all()
    assert segment(img, SegmentationParams(min_region_fraction=0.6)) == []


def test_segment_deterministic_and_disjoint():
    rng = np.random.default_rng(9)
    img = np.repeat(np.repeat(rng.random((8, 8, 3)), 8, 0), 8, 1)
    img += rng.normal(0, 0.01, img.shape)
    img = RasterImage(np.clip(img, 0, 1))
    p = SegmentationParams(min_region_fraction=0.01, rng_seed=4)
    r1, l1, p1 = segment_labels(img, p)
    r2, l2, p2 = segment_labels(img, p)
    assert np.array_equal(l1, l2) and np.array_equal(p1.modes, p2.modes)
    assert len(r1) == len(r2)
    for a, b in zip(r1, r2):
        assert a.label == b.label and a.bbox == b.bbox and np.array_equal(a.mask, b.mask)
    total = np.zeros(l1.shape, int)
    for r in r1:
        total += r.mask
    assert total.max() <= 1
    assert sum(r.area for r in r1) <= l1.size


def test_region_label_map():
    regs = segment(_half_red_blue(), P)
    m = region_label_map(regs, (256, 256))
    assert m.dtype == np.uint8
    assert set(np.unique(m).tolist()) == {0, 1}
    lab = np.zeros((256, 256), int)
    lab[100:110, 100:110] = 1
    m = region_label_map(extract_regions(lab, P), lab.shape)
    assert np.all(m[100:110, 100:110] == 255)


def test_params_validation():
    for kw in ({"radius": 0}, {"min_region_fraction": 1.0}, {"n_windows": 0}, {"conv_eps": 0}):
        with pytest.raises(ValueError):
            SegmentationParams(**kw)
