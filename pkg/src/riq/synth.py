"""Seeded synthetic scene generator standing in for a labelled photo corpus.

Every category gets its own hue band (non-overlapping) and texture recipe:

* Sky: smooth blue with a gentle saturation gradient.
* Water: blue-cyan with medium-frequency sinusoidal ripples.
* Grass: green with per-pixel hue/saturation noise.
* Sand/Rock: yellow-brown with blotchy mid-scale texture.
* Building: low-saturation brown/grey facade with a grid of dark windows.

Brightness is held constant within a surface (window panes excepted) because
the preprocessing chain equalises the V channel, which would stretch any
small brightness ripple to the full range.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .imaging import hsv_to_rgb, save_ppm
from .mlnn import CATEGORIES

DEFAULT_SIZE = 256

# (low, high) mean hue in degrees per category; bands do not overlap
HUE_BANDS = {
    "Sky": (205.0, 228.0),
    "Building": (12.0, 26.0),
    "Sand/Rock": (34.0, 50.0),
    "Grass": (88.0, 128.0),
    "Water": (174.0, 194.0),
}


@dataclass(frozen=True)
class SynthCounts:
    train: int = 200
    test: int = 500
    scenes: int = 12


def _base(rng, size, hue_band, sat_range, val_range):
    h = np.full((size, size), rng.uniform(*hue_band))
    s = np.full((size, size), rng.uniform(*sat_range))
    v = np.full((size, size), rng.uniform(*val_range))
    return h, s, v


def _sky(rng, size):
    h, s, v = _base(rng, size, HUE_BANDS["Sky"], (0.35, 0.55), (0.80, 0.95))
    rows = np.linspace(0.0, 1.0, size)[:, None]
    s = s + rng.uniform(0.04, 0.10) * (rows - 0.5)
    return h, s, v


def _water(rng, size):
    h, s, v = _base(rng, size, HUE_BANDS["Water"], (0.55, 0.75), (0.55, 0.80))
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    period = rng.uniform(10.0, 18.0)
    angle = rng.uniform(-0.4, 0.4)
    phase = rng.uniform(0, 2 * np.pi)
    wave = np.sin(2 * np.pi * (yy * np.cos(angle) + 0.3 * xx * np.sin(angle)) / period + phase)
    s = s + 0.05 * wave
    h = h + 3.0 * wave
    return h, s, v


def _grass(rng, size):
    h, s, v = _base(rng, size, HUE_BANDS["Grass"], (0.50, 0.75), (0.40, 0.70))
    h = h + rng.normal(0.0, 5.0, (size, size))
    s = s + rng.normal(0.0, 0.06, (size, size))
    return h, s, v


def _sand(rng, size):
    h, s, v = _base(rng, size, HUE_BANDS["Sand/Rock"], (0.35, 0.55), (0.60, 0.85))
    blot = gaussian_filter(rng.normal(0.0, 1.0, (size, size)), sigma=rng.uniform(3.0, 5.0), mode="wrap")
    blot /= blot.std() + 1e-12
    s = s + 0.05 * blot
    h = h + 2.0 * blot
    return h, s, v


def _building(rng, size):
    h, s, v = _base(rng, size, HUE_BANDS["Building"], (0.10, 0.28), (0.55, 0.80))
    pitch_y = int(rng.integers(size // 12, size // 8))
    pitch_x = int(rng.integers(size // 12, size // 8))
    win_h = int(pitch_y * rng.uniform(0.45, 0.6))
    win_w = int(pitch_x * rng.uniform(0.45, 0.6))
    off_y = int(rng.integers(0, pitch_y))
    off_x = int(rng.integers(0, pitch_x))
    yy, xx = np.mgrid[0:size, 0:size]
    windows = (((yy - off_y) % pitch_y) < win_h) & (((xx - off_x) % pitch_x) < win_w)
    v = np.where(windows, v * 0.45, v)
    s = np.where(windows, s * 0.5, s)
    return h, s, v


_RECIPES = {
    "Sky": _sky,
    "Building": _building,
    "Sand/Rock": _sand,
    "Grass": _grass,
    "Water": _water,
}


def category_hsv(category: str, rng: np.random.Generator, size: int = DEFAULT_SIZE) -> np.ndarray:
    h, s, v = _RECIPES[category](rng, size)
    return np.stack([np.mod(h, 360.0), np.clip(s, 0.0, 1.0), np.clip(v, 0.0, 1.0)], axis=-1)


def category_image(category: str, rng: np.random.Generator, size: int = DEFAULT_SIZE) -> np.ndarray:
    return hsv_to_rgb(category_hsv(category, rng, size))


def _wavy_split(rng, size, fraction, side):
    """Boolean mask of the ``fraction`` of the image nearest ``side`` (0..3), wavy edge."""
    t = np.arange(size)
    edge = size * fraction + 4.0 * np.sin(2 * np.pi * t / size * rng.uniform(1, 3) + rng.uniform(0, 2 * np.pi))
    near = t[:, None] < edge[None, :]  # rows near the top edge
    return np.rot90(near, k=side)


def scene_image(top: str, bottom: str, rng: np.random.Generator, size: int = DEFAULT_SIZE) -> np.ndarray:
    """Two-surface scene: ``top`` above a slightly wavy horizon, ``bottom`` below."""
    a = category_image(top, rng, size)
    b = category_image(bottom, rng, size)
    upper = _wavy_split(rng, size, rng.uniform(0.4, 0.6), 0)
    return np.where(upper[..., None], a, b)


def instance_image(category: str, rng: np.random.Generator, size: int = DEFAULT_SIZE) -> np.ndarray:
    """A labelled surface covering 65-85% of the frame plus a clutter surface along one side.

    The clutter varies which surface is brighter, so equalised brightness
    behaves as it does in multi-surface scenes.
    """
    others = [c for c in CATEGORIES if c != category]
    other = others[int(rng.integers(len(others)))]
    main = category_image(category, rng, size)
    clutter = category_image(other, rng, size)
    side = _wavy_split(rng, size, rng.uniform(0.15, 0.35), int(rng.integers(4)))
    return np.where(side[..., None], clutter, main)


def _slug(category: str) -> str:
    return category.lower().replace("/", "_")


def _split(out_dir, name, n, seed, split_id, size):
    lines = []
    for i in range(n):
        cat = CATEGORIES[i % len(CATEGORIES)]
        rng = np.random.default_rng((seed, split_id, i))
        rel = f"{name}/{_slug(cat)}_{i:04d}.ppm"
        save_ppm(instance_image(cat, rng, size), os.path.join(out_dir, rel))
        lines.append(f"{rel}\t0\t{cat}\n")
    with open(os.path.join(out_dir, f"{name}.tsv"), "w", newline="\n") as fh:
        fh.writelines(lines)
    return lines


def generate_dataset(out_dir, seed: int = 0, counts: SynthCounts | None = None,
                     size: int = DEFAULT_SIZE) -> dict[str, int]:
    """Write train/test images with their manifests, plus two-surface scenes.

    Manifest lines are ``<relative path>\\t<region index>\\t<category>``; the
    labelled surface is the largest region of its image, so the index is 0.
    ``scenes.tsv`` lists each scene with its two ground-truth keywords.
    """
    counts = counts or SynthCounts()
    os.makedirs(out_dir, exist_ok=True)
    for sub in ("train", "test", "scenes"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)
    _split(out_dir, "train", counts.train, seed, 0, size)
    _split(out_dir, "test", counts.test, seed, 1, size)

    pairs = [(t, b) for t in ("Sky",) for b in CATEGORIES if b != "Sky"]
    pairs += [("Building", "Grass"), ("Building", "Sand/Rock"), ("Sand/Rock", "Water")]
    scene_lines = []
    for i in range(counts.scenes):
        top, bottom = pairs[i % len(pairs)]
        rng = np.random.default_rng((seed, 2, i))
        rel = f"scenes/scene_{i:03d}.ppm"
        save_ppm(scene_image(top, bottom, rng, size), os.path.join(out_dir, rel))
        scene_lines.append(f"{rel}\t{top},{bottom}\n")
    with open(os.path.join(out_dir, "scenes.tsv"), "w", newline="\n") as fh:
        fh.writelines(scene_lines)
    return {"train": counts.train, "test": counts.test, "scenes": counts.scenes}
