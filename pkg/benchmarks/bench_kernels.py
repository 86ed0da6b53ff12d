"""Time the hot kernels under the numba and pure-numpy backends.

    python benchmarks/bench_kernels.py [--repeat N] [--size S]

Both backends run in this process by flipping ``riq._accel.USE_NUMBA``; the
numba kernels are compiled once before timing.
"""

import argparse
import time

import numpy as np

from riq import _accel
from riq.imaging import RasterImage, preprocess, rgb_to_hsv
from riq.segmentation import (
    SegmentationParams,
    assign_to_palette,
    cone_embedding,
    label_components,
    mean_shift_modes,
)
from riq.synth import scene_image


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--size", type=int, default=256)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    img = preprocess(RasterImage(scene_image("Sky", "Grass", rng, args.size)))
    pts = cone_embedding(rgb_to_hsv(img)).reshape(-1, 3)
    p = SegmentationParams()
    pal = mean_shift_modes(pts, p)
    labels = assign_to_palette(pts, pal).reshape(args.size, args.size)
    noisy = rng.integers(0, 4, (args.size, args.size))

    cases = {
        "mean_shift (scene)": lambda: mean_shift_modes(pts, p),
        "components (scene)": lambda: label_components(labels),
        "components (noise)": lambda: label_components(noisy),
    }
    backends = ["numpy"] + (["numba"] if _accel.HAVE_NUMBA else [])
    results = {}
    for b in backends:
        _accel.USE_NUMBA = b == "numba"
        for fn in cases.values():
            fn()  # compile / warm caches
        results[b] = {name: _best(fn, args.repeat) for name, fn in cases.items()}

    print(f"{'kernel':<22}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) == 2 else ""))
    for name in cases:
        row = f"{name:<22}" + "".join(f"{1000 * results[b][name]:>10.1f}ms" for b in backends)
        if len(backends) == 2:
            row += f"{results['numpy'][name] / results['numba'][name]:>11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
