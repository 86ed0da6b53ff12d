import os

import numpy as np
import pytest

from riq import _accel
from riq.imaging import save_ppm

_ACCEPTANCE = []


def record_acceptance(name, passed, detail=""):
    _ACCEPTANCE.append((name, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _ACCEPTANCE:
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"{status}  {name}" + (f"  ({detail})" if detail else ""))


@pytest.fixture(params=["numba", "numpy"])
def backend(request, monkeypatch):
    """Run a test once per kernel backend."""
    if request.param == "numba" and not _accel.HAVE_NUMBA:
        pytest.skip("numba not available")
    monkeypatch.setattr(_accel, "USE_NUMBA", request.param == "numba")
    return request.param


@pytest.fixture
def write_ppm(tmp_path):
    def _write(rgb, name="img.ppm"):
        path = tmp_path / name
        save_ppm(np.asarray(rgb, dtype=np.float64), path)
        return path
    return _write


def solid(rgb, size=64):
    return np.broadcast_to(np.asarray(rgb, dtype=np.float64), (size, size, 3)).copy()


# representative HSV colour per category for end-to-end tests
CATEGORY_HSV = {
    "Sky": (215.0, 0.5, 0.9),
    "Building": (20.0, 0.2, 0.7),
    "Sand/Rock": (42.0, 0.45, 0.8),
    "Grass": (110.0, 0.6, 0.5),
    "Water": (185.0, 0.65, 0.6),
}


def hsv_solid(h, s, v, size=64):
    from riq.imaging import hsv_to_rgb
    return hsv_to_rgb(np.broadcast_to(np.array([h, s, v]), (size, size, 3)).copy())


@pytest.fixture(scope="session")
def color_dataset(tmp_path_factory):
    """Solid-colour training images with a manifest; Water also spans low and high saturation."""
    root = tmp_path_factory.mktemp("colors")
    rng = np.random.default_rng(0)
    lines = []
    for cat, (h, s, v) in CATEGORY_HSV.items():
        for i in range(8):
            sat = rng.uniform(0.3, 0.9) if cat == "Water" else s + rng.uniform(-0.05, 0.05)
            rgb = hsv_solid(h + rng.uniform(-3, 3), sat, v)
            name = f"{cat.replace('/', '_')}_{i}.ppm"
            save_ppm(rgb, root / name)
            lines.append(f"{name}\t0\t{cat}\n")
    (root / "train.tsv").write_text("".join(lines))
    return root


@pytest.fixture(scope="session")
def color_model(color_dataset):
    from riq.mlnn import TrainConfig, train
    from riq.pipeline import load_labeled_regions, read_manifest
    from riq.segmentation import SegmentationParams
    data = load_labeled_regions(read_manifest(color_dataset / "train.tsv"), SegmentationParams())
    return train(data, TrainConfig())
