"""End-to-end glue: image -> regions -> feature vectors -> categories -> index."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import BadManifest, RiqError
from .features import FEATURE_LENGTH, extract_region_features
from .imaging import PreprocessParams, load_image, preprocess, rgb_to_hsv
from .mlnn import CATEGORIES, LabeledRegion, MlnnModel, classify_raw, dumps_model
from .retrieval import FailedImage, ImageIndex, ImageRecord, fingerprint, image_id_for, validate_image_id
from .segmentation import Region, SegmentationParams, segment_labels

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".ppm", ".png", ".jpg", ".jpeg")


@dataclass(eq=False)
class ImageAnalysis:
    regions: list[Region]
    features: np.ndarray  # (n_regions, FEATURE_LENGTH)
    labels: np.ndarray  # per-pixel palette labels
    shape: tuple[int, int]


def analyze_image(path, seg: SegmentationParams, pre: PreprocessParams | None = None) -> ImageAnalysis:
    img = preprocess(load_image(path), pre or PreprocessParams())
    hsv = rgb_to_hsv(img)
    regions, labels, _ = segment_labels(hsv, seg)
    if regions:
        feats = np.stack([extract_region_features(hsv, r) for r in regions])
    else:
        feats = np.zeros((0, FEATURE_LENGTH))
    return ImageAnalysis(regions, feats, labels, (img.height, img.width))


def _map(fn, items, jobs: int):
    """Order-preserving map, threaded when ``jobs > 1`` (kernels release the GIL)."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def _safe(fn):
    def run(item):
        try:
            return fn(item)
        except (RiqError, OSError) as exc:
            return exc
    return run


def classify_image(path, model: MlnnModel, seg: SegmentationParams, pre=None):
    """Return (regions, category indices, decoded outputs) for one image."""
    an = analyze_image(path, seg, pre)
    if not an.regions:
        return an.regions, np.zeros(0, dtype=np.int64), np.zeros(0)
    cats, outs = classify_raw(model, an.features)
    return an.regions, cats, outs


def index_image(path, model: MlnnModel, seg: SegmentationParams, root=None, pre=None) -> ImageRecord:
    image_id = image_id_for(path, root) if root is not None else os.fspath(path)
    validate_image_id(image_id)
    regions, cats, _ = classify_image(path, model, seg, pre)
    keywords = frozenset(model.categories[c - 1] for c in cats)
    return ImageRecord(image_id, keywords, len(regions))


def list_images(directory) -> list[str]:
    out = []
    for dirpath, dirnames, filenames in os.walk(directory):
        dirnames.sort()
        for name in sorted(filenames):
            if name.lower().endswith(IMAGE_SUFFIXES):
                out.append(os.path.join(dirpath, name))
    return sorted(out, key=lambda p: image_id_for(p, directory))


def build_index(paths, model: MlnnModel, seg: SegmentationParams, root,
                jobs: int = 1, pre=None) -> tuple[ImageIndex, list[FailedImage]]:
    paths = list(paths)
    results = _map(_safe(lambda p: index_image(p, model, seg, root, pre)), paths, jobs)
    records, failures = [], []
    for path, res in zip(paths, results):
        if isinstance(res, Exception):
            failures.append(FailedImage(image_id_for(path, root), str(res)))
            log.warning("skipping %s: %s", path, res)
        else:
            records.append(res)
    fp = fingerprint(dumps_model(model).encode("ascii"), seg.describe())
    return ImageIndex(records, fp, tuple(model.categories)), failures


# -- manifests ---------------------------------------------------------------

@dataclass(frozen=True)
class ManifestEntry:
    path: str
    region: int
    category: int  # 1-based
    line: int


def read_manifest(path, categories=CATEGORIES) -> list[ManifestEntry]:
    base = os.path.dirname(os.path.abspath(path))
    lookup = {c: i + 1 for i, c in enumerate(categories)}
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise BadManifest("expected '<image path>\\t<region index>\\t<category>'", lineno)
            img, idx, cat = parts
            try:
                region = int(idx)
            except ValueError:
                raise BadManifest(f"region index {idx!r} is not an integer", lineno) from None
            if region < 0:
                raise BadManifest("region index must be >= 0", lineno)
            if cat not in lookup:
                raise BadManifest(f"unknown category {cat!r}", lineno)
            full = img if os.path.isabs(img) else os.path.join(base, img)
            entries.append(ManifestEntry(full, region, lookup[cat], lineno))
    return entries


def load_labeled_regions(entries, seg: SegmentationParams, jobs: int = 1,
                         pre=None) -> list[LabeledRegion]:
    """Feature vectors for manifest entries; each image is analysed once."""
    unique = list(dict.fromkeys(e.path for e in entries))
    results = _map(_safe(lambda p: analyze_image(p, seg, pre)), unique, jobs)
    by_path = dict(zip(unique, results))
    out = []
    for e in entries:
        an = by_path[e.path]
        if isinstance(an, Exception):
            raise BadManifest(f"{e.path}: {an}", e.line)
        if e.region >= len(an.regions):
            raise BadManifest(
                f"region index {e.region} out of range; {e.path} has {len(an.regions)} significant regions",
                e.line)
        out.append(LabeledRegion(an.features[e.region], e.category))
    return out
