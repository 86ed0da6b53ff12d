"""Keyword index over images and conjunctive/disjunctive queries."""

from __future__ import annotations

import hashlib
import io
import os
import warnings
from dataclasses import dataclass, field

from .errors import FingerprintMismatch, FormatError, RiqError, UnknownKeyword
from .mlnn import CATEGORIES

INDEX_MAGIC = "RIQIDX 1"


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    keywords: frozenset[str]
    region_count: int

    def __post_init__(self):
        object.__setattr__(self, "keywords", frozenset(self.keywords))
        validate_image_id(self.image_id)
        if self.region_count < len(self.keywords):
            raise ValueError("region_count must be >= number of keywords")


@dataclass(frozen=True)
class FailedImage:
    image_id: str
    error: str


@dataclass
class ImageIndex:
    records: list[ImageRecord] = field(default_factory=list)
    fingerprint: str = "0" * 64
    categories: tuple[str, ...] = CATEGORIES

    def __post_init__(self):
        ids = [r.image_id for r in self.records]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate image id in index")
        for r in self.records:
            extra = r.keywords - set(self.categories)
            if extra:
                raise UnknownKeyword(f"record {r.image_id!r} has unknown keywords {sorted(extra)}")

    def __len__(self):
        return len(self.records)

    def __eq__(self, other):
        if not isinstance(other, ImageIndex):
            return NotImplemented
        return (self.fingerprint == other.fingerprint
                and self.records == other.records)


def validate_image_id(image_id: str) -> None:
    if not image_id or "\t" in image_id or "\n" in image_id or "\r" in image_id:
        raise ValueError(f"invalid image id {image_id!r}: must be nonempty without tabs or newlines")


def fingerprint(model_bytes: bytes, seg_description: str) -> str:
    h = hashlib.sha256()
    h.update(model_bytes)
    h.update(b"\0")
    h.update(seg_description.encode("utf-8"))
    return h.hexdigest()


def canonical_keywords(terms, categories=CATEGORIES) -> frozenset[str]:
    """Map query terms case-insensitively onto category names."""
    lookup = {c.lower(): c for c in categories}
    out = set()
    for t in terms:
        name = lookup.get(str(t).strip().lower())
        if name is None:
            raise UnknownKeyword(f"unknown keyword {t!r}; expected one of {', '.join(categories)}")
        out.add(name)
    return frozenset(out)


def query(index: ImageIndex, keywords, any_of: bool = False,
          expected_fingerprint: str | None = None) -> list[str]:
    """Ids of images whose keyword set contains every term (or any term with ``any_of``)."""
    terms = canonical_keywords(keywords, index.categories)
    if not terms:
        raise ValueError("query needs at least one keyword")
    if expected_fingerprint is not None and expected_fingerprint != index.fingerprint:
        warnings.warn("index fingerprint does not match the current model/parameters",
                      FingerprintMismatch, stacklevel=2)
    if any_of:
        hits = [r.image_id for r in index.records if r.keywords & terms]
    else:
        hits = [r.image_id for r in index.records if terms <= r.keywords]
    return sorted(hits)


# -- file format -----------------------------------------------------------

def _ordered(keywords, categories) -> list[str]:
    rank = {c: i for i, c in enumerate(categories)}
    return sorted(keywords, key=lambda k: rank[k])


def dumps_index(index: ImageIndex) -> str:
    buf = io.StringIO()
    buf.write(INDEX_MAGIC + "\n")
    buf.write(f"fingerprint {index.fingerprint}\n")
    for r in index.records:
        kw = ",".join(_ordered(r.keywords, index.categories)) or "-"
        buf.write(f"{r.image_id}\t{kw}\t{r.region_count}\n")
    return buf.getvalue()


def save_index(index: ImageIndex, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_index(index))


def loads_index(text: str, categories=CATEGORIES) -> ImageIndex:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0] != INDEX_MAGIC:
        raise FormatError("bad index magic; expected " + repr(INDEX_MAGIC))
    if len(lines) < 2 or not lines[1].startswith("fingerprint "):
        raise FormatError("line 2: expected fingerprint")
    fp = lines[1][len("fingerprint "):]
    if len(fp) != 64 or any(ch not in "0123456789abcdef" for ch in fp):
        raise FormatError("line 2: fingerprint must be 64 lowercase hex digits")
    known = set(categories)
    records = []
    for lineno, line in enumerate(lines[2:], start=3):
        parts = line.split("\t")
        if len(parts) != 3:
            raise FormatError(f"line {lineno}: expected 3 tab-separated fields")
        image_id, kw, count = parts
        keywords = [] if kw == "-" else kw.split(",")
        if any(k not in known for k in keywords):
            raise FormatError(f"line {lineno}: unknown keyword in {kw!r}")
        try:
            n = int(count)
            records.append(ImageRecord(image_id, frozenset(keywords), n))
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
    try:
        return ImageIndex(records, fp, tuple(categories))
    except (ValueError, RiqError) as exc:
        raise FormatError(str(exc)) from None


def load_index(path, categories=CATEGORIES) -> ImageIndex:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return loads_index(fh.read(), categories)


def image_id_for(path, root) -> str:
    """Relative, forward-slash id of ``path`` under ``root``."""
    rel = os.path.relpath(os.fspath(path), os.fspath(root))
    return rel.replace(os.sep, "/")
