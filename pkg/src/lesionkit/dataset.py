"""Labeled-sample catalogs and deterministic stratified train/test splitting."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path
from typing import Iterable

import numpy as np

__all__ = ["IngestionError", "Manifest", "Record", "SplitError", "SplitSpec",
           "apportion", "ingest_directory", "stats", "stratified_split"]

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}
SPLITS = ("train", "test", "unassigned")


class IngestionError(ValueError):
    pass


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class Record:
    path: str
    label: str
    split: str = "unassigned"


@dataclass(frozen=True)
class Manifest:
    records: tuple[Record, ...]
    classes: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "classes", tuple(self.classes))
        if len(set(self.classes)) != len(self.classes):
            raise ValueError("class names must be unique")
        seen = set()
        known = set(self.classes)
        for r in self.records:
            if r.path in seen:
                raise ValueError(f"duplicate path in manifest: {r.path}")
            seen.add(r.path)
            if r.label not in known:
                raise ValueError(f"label {r.label!r} of {r.path} is not a known class")
            if r.split not in SPLITS:
                raise ValueError(f"invalid split tag {r.split!r} for {r.path}")

    def __len__(self):
        return len(self.records)

    def select(self, split: str) -> list[Record]:
        return [r for r in self.records if r.split == split]

    def label_index(self, label: str) -> int:
        return self.classes.index(label)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["path", "label", "split"])
        for r in self.records:
            writer.writerow([r.path, r.label, r.split])
        return buf.getvalue()

    def save(self, path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8", newline="\n")

    @classmethod
    def from_csv(cls, text: str, classes: Iterable[str] | None = None) -> Manifest:
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames != ["path", "label", "split"]:
            raise ValueError(f"manifest header must be path,label,split; got {reader.fieldnames}")
        records = [Record(row["path"], row["label"], row["split"]) for row in reader]
        if classes is None:
            classes = sorted({r.label for r in records})
        return cls(tuple(records), tuple(classes))

    @classmethod
    def load(cls, path) -> Manifest:
        return cls.from_csv(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise SplitError(f"test_fraction must lie in (0, 1), got {self.test_fraction}")


def ingest_directory(root) -> Manifest:
    """Catalog ``root/<class>/<image>`` files.

    Records are sorted by path; labels are subdirectory names. Image files
    placed directly under ``root`` have no class and are rejected.
    """
    root = Path(root)
    if not root.is_dir():
        raise IngestionError(f"{root} is not a directory")
    stray = sorted(str(p) for p in root.iterdir() if p.is_file())
    if stray:
        raise IngestionError("files without a class directory: " + ", ".join(stray))
    records = []
    classes = []
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        files = sorted(p for p in sub.iterdir()
                       if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
        if not files:
            continue
        classes.append(sub.name)
        records.extend(Record(p.as_posix(), sub.name) for p in files)
    if not records:
        raise IngestionError(f"no images found under {root}")
    return Manifest(tuple(records), tuple(classes))


def apportion(total: int, sizes: list[int]) -> list[int]:
    """Largest-remainder (Hamilton) split of ``total`` proportional to ``sizes``.

    Ties in the remainder go to the earlier class.
    """
    n = sum(sizes)
    quotas = [Fraction(total * s, n) for s in sizes]
    counts = [math.floor(q) for q in quotas]
    left = total - sum(counts)
    order = sorted(range(len(sizes)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:left]:
        counts[i] += 1
    return counts


def test_total(n: int, test_fraction: float) -> int:
    # exact decimal fraction so that e.g. 0.1 * 30 is 3, not 3.0000000000000004
    return math.ceil(Fraction(str(test_fraction)) * n)


test_total.__test__ = False  # not a pytest test


def stratified_split(manifest: Manifest, spec: SplitSpec) -> Manifest:
    """Assign every record to train or test.

    The test total is ``ceil(test_fraction * N)``, divided among classes by
    :func:`apportion`. Members within each class are picked by a shuffle
    seeded from ``(spec.seed, class index)``.
    """
    by_class = {c: [] for c in manifest.classes}
    for i, r in enumerate(manifest.records):
        by_class[r.label].append(i)
    empty = [c for c, idx in by_class.items() if not idx]
    if empty:
        raise SplitError("classes without samples: " + ", ".join(empty))
    sizes = [len(by_class[c]) for c in manifest.classes]
    counts = apportion(test_total(len(manifest), spec.test_fraction), sizes)

    splits = ["train"] * len(manifest)
    for ci, (cls, k) in enumerate(zip(manifest.classes, counts)):
        idx = by_class[cls]
        rng = np.random.default_rng([int(spec.seed) & 0xFFFFFFFFFFFFFFFF, ci])
        for j in rng.permutation(len(idx))[:k]:
            splits[idx[j]] = "test"
    records = tuple(replace(r, split=s) for r, s in zip(manifest.records, splits))
    return Manifest(records, manifest.classes)


def stats(manifest: Manifest) -> dict[str, dict[str, int]]:
    """Per-class counts for each split tag, in class order, plus a ``total`` entry."""
    table = {c: {s: 0 for s in SPLITS} for c in manifest.classes}
    for r in manifest.records:
        table[r.label][r.split] += 1
    for c in manifest.classes:
        table[c]["total"] = sum(table[c][s] for s in SPLITS)
    return table
