"""Corpus ingestion, feature-table persistence, splitting, and scaling.

The on-disk layout follows the source corpus convention: one directory
per instrument code under a root, each holding the class's .wav clips.
Extracted features persist as CSV so the slow extraction stage and the
fast training stage can run separately.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .features import feature_names

IRMAS_CLASS_CODES = ("flu", "pia", "tru", "gac", "voi", "org")
IRMAS_CLASS_NAMES = {
    "flu": "Flute",
    "pia": "Piano",
    "tru": "Trumpet",
    "gac": "Guitar",
    "voi": "Voice",
    "org": "Organ",
}


class DatasetLayoutError(ValueError):
    """Corpus directory tree does not match the expected layout."""


class MissingClassDir(DatasetLayoutError):
    pass


class EmptyClassDir(DatasetLayoutError):
    pass


class FeatureCsvError(ValueError):
    """Feature table file does not match the expected schema."""


@dataclass(eq=False)
class LabeledDataset:
    """Feature matrix with integer labels, class names, and provenance."""

    features: np.ndarray
    labels: np.ndarray
    class_names: tuple[str, ...]
    paths: tuple[str, ...]

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.class_names = tuple(self.class_names)
        self.paths = tuple(self.paths)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        n = self.features.shape[0]
        if not (n == self.labels.size == len(self.paths)):
            raise ValueError("features, labels, and paths must have equal length")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features contain NaN or Inf")
        if n and not (0 <= self.labels.min() and self.labels.max() < len(self.class_names)):
            raise ValueError("labels must index class_names")

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def subset(self, indices) -> "LabeledDataset":
        indices = np.asarray(indices, dtype=np.intp)
        return LabeledDataset(
            self.features[indices],
            self.labels[indices],
            self.class_names,
            tuple(self.paths[i] for i in indices),
        )


@dataclass(frozen=True, eq=False)
class Scaler:
    """Column-wise standardization fitted on training rows only."""

    means: np.ndarray
    stdevs: np.ndarray

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.means) / self.stdevs

    def inverse_transform(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) * self.stdevs + self.means


@dataclass(frozen=True)
class SplitSpec:
    """Holdout/CV geometry; the seed makes every split reproducible."""

    test_fraction: float = 0.2
    folds: int = 10
    seed: int = 0
    stratified: bool = False

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must be in (0, 1)")
        if self.folds < 2:
            raise ValueError("folds must be >= 2")


def scan_instrument_dirs(
    root: str | Path, class_names: Sequence[str]
) -> list[tuple[Path, int]]:
    """Pair every .wav under each class folder with its class index.

    Ordering is deterministic: classes in the given order, files
    lexicographically within each class.
    """
    root = Path(root)
    pairs: list[tuple[Path, int]] = []
    for label, name in enumerate(class_names):
        class_dir = root / name
        if not class_dir.is_dir():
            raise MissingClassDir(f"class directory not found: {class_dir}")
        wavs = sorted(p for p in class_dir.iterdir() if p.suffix == ".wav" and p.is_file())
        if not wavs:
            raise EmptyClassDir(f"no .wav files in class directory: {class_dir}")
        pairs.extend((p, label) for p in wavs)
    return pairs


def train_test_split(ds: LabeledDataset, spec: SplitSpec) -> tuple[LabeledDataset, LabeledDataset]:
    """Seeded shuffled split; the first ceil(test_fraction * n) go to test."""
    if ds.n_samples == 0:
        raise ValueError("cannot split an empty dataset")
    rng = np.random.default_rng(spec.seed)
    if spec.stratified:
        test_parts, train_parts = [], []
        for label in range(ds.n_classes):
            members = np.nonzero(ds.labels == label)[0]
            perm = members[rng.permutation(members.size)]
            n_test = math.ceil(spec.test_fraction * members.size)
            test_parts.append(perm[:n_test])
            train_parts.append(perm[n_test:])
        test_idx = np.concatenate(test_parts)
        train_idx = np.concatenate(train_parts)
    else:
        perm = rng.permutation(ds.n_samples)
        n_test = math.ceil(spec.test_fraction * ds.n_samples)
        test_idx, train_idx = perm[:n_test], perm[n_test:]
    if test_idx.size == 0 or train_idx.size == 0:
        raise ValueError(
            f"degenerate split: {train_idx.size} train / {test_idx.size} test samples"
        )
    return ds.subset(train_idx), ds.subset(test_idx)


def kfold_indices(n: int, k: int, seed: int) -> list[np.ndarray]:
    """Deal shuffled indices into k disjoint folds with sizes differing by <= 1."""
    if k > n:
        raise ValueError(f"cannot make {k} folds from {n} samples")
    if k < 2:
        raise ValueError("folds must be >= 2")
    perm = np.random.default_rng(seed).permutation(n)
    return [perm[i::k] for i in range(k)]


def fit_scaler(features: np.ndarray) -> Scaler:
    """Column means and population stdevs; zero-variance columns pin stdev 1."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] == 0:
        raise ValueError("scaler needs a non-empty 2-D feature matrix")
    means = features.mean(axis=0)
    stdevs = features.std(axis=0)
    stdevs = np.where(stdevs == 0.0, 1.0, stdevs)
    return Scaler(means, stdevs)


def dataset_fingerprint(ds: LabeledDataset) -> str:
    """SHA-256 over the raw feature/label bytes; stored in model metadata."""
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(ds.features).tobytes())
    h.update(np.ascontiguousarray(ds.labels).tobytes())
    return h.hexdigest()


def _repr_float(x) -> str:
    return repr(float(x))


def write_feature_csv(
    path: str | Path,
    ds: LabeledDataset,
    header_comments: Iterable[str] = (),
) -> None:
    """Persist a feature table with full decimal precision.

    Leading '#' comment lines carry the resolved run configuration and a
    mandatory 'classes=' line naming the label encoding.
    """
    n_mfcc = ds.features.shape[1] - 4
    with open(path, "w", newline="") as fh:
        for line in header_comments:
            fh.write(f"# {line}\n")
        fh.write("# classes=" + ",".join(ds.class_names) + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["path", "label", *feature_names(n_mfcc)])
        for row_path, label, row in zip(ds.paths, ds.labels, ds.features):
            writer.writerow([row_path, int(label), *(_repr_float(v) for v in row)])


def read_feature_csv(path: str | Path) -> LabeledDataset:
    """Load a feature table written by write_feature_csv.

    Raises:
        FeatureCsvError: missing classes line, wrong columns, bad labels,
            or non-finite values.
    """
    class_names: tuple[str, ...] | None = None
    with open(path, newline="") as fh:
        lines = fh.readlines()
    body_start = 0
    for line in lines:
        if not line.startswith("#"):
            break
        body_start += 1
        stripped = line[1:].strip()
        if stripped.startswith("classes="):
            class_names = tuple(c for c in stripped[len("classes="):].split(",") if c)
    if class_names is None:
        raise FeatureCsvError(f"{path}: missing '# classes=' header line")
    rows = list(csv.reader(lines[body_start:]))
    if not rows:
        raise FeatureCsvError(f"{path}: no header row")
    header = rows[0]
    if len(header) < 3 or header[:2] != ["path", "label"]:
        raise FeatureCsvError(f"{path}: header must start with path,label")
    expected = list(feature_names(len(header) - 2 - 4))
    if header[2:] != expected:
        got = set(header[2:])
        missing = [c for c in expected if c not in got]
        raise FeatureCsvError(
            f"{path}: unexpected feature columns"
            + (f", missing {missing[0]!r}" if missing else f": {header[2:]}")
        )
    paths, labels, feats = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise FeatureCsvError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        paths.append(row[0])
        try:
            labels.append(int(row[1]))
            feats.append([float(v) for v in row[2:]])
        except ValueError as exc:
            raise FeatureCsvError(f"{path}:{lineno}: {exc}") from exc
    if not paths:
        raise FeatureCsvError(f"{path}: no data rows")
    features = np.asarray(feats, dtype=np.float64)
    if not np.all(np.isfinite(features)):
        raise FeatureCsvError(f"{path}: non-finite feature values")
    labels_arr = np.asarray(labels, dtype=np.int64)
    if labels_arr.min() < 0 or labels_arr.max() >= len(class_names):
        raise FeatureCsvError(f"{path}: label outside declared classes")
    return LabeledDataset(features, labels_arr, class_names, tuple(paths))
