"""Datasets in [0, 1]^d, labeled/unlabeled splits and tabular augmentations."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.datasets import make_blobs, make_moons

from .diffcore import DTYPE


class CsvFormatError(ValueError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.line = line


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray | None
    n_classes: int

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=DTYPE)
        if feats.ndim != 2:
            raise ValueError(f"features must be n x d, got shape {feats.shape}")
        feats.setflags(write=False)
        object.__setattr__(self, "features", feats)
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64)
            if labels.shape != (feats.shape[0],):
                raise ValueError(f"{labels.shape} labels for {feats.shape[0]} rows")
            if labels.size and (labels.min() < 0 or labels.max() >= self.n_classes):
                raise ValueError(f"labels outside 0..{self.n_classes - 1}")
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        labels = None if self.labels is None else self.labels[idx]
        return Dataset(self.features[idx], labels, self.n_classes)


@dataclass(frozen=True, eq=False)
class UnlabeledSet:
    """Unlabeled features; true labels are kept aside for evaluation only."""

    features: np.ndarray
    n_classes: int
    indices: np.ndarray
    _withheld: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def withheld_labels(self) -> np.ndarray:
        """Ground truth for metrics.  Training code never calls this."""
        if self._withheld is None:
            raise ValueError("no withheld labels for this unlabeled set")
        return self._withheld


@dataclass(frozen=True, eq=False)
class SemiSplit:
    labeled: Dataset
    unlabeled: UnlabeledSet
    labeled_indices: np.ndarray
    seed: int


@dataclass(frozen=True)
class AugmentationSpec:
    weak_noise: float = 0.02
    strong_noise: float = 0.10
    strong_dropout: float = 0.1

    def __post_init__(self):
        if not 0 <= self.weak_noise < self.strong_noise:
            raise ValueError("need 0 <= weak_noise < strong_noise")
        if not 0 <= self.strong_dropout < 1:
            raise ValueError("strong_dropout must lie in [0, 1)")


def normalize_unit_interval(features) -> np.ndarray:
    """Per-column min-max scaling to [0, 1]; constant columns become 0."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if not np.all(np.isfinite(x)):
        raise ValueError("features must be finite")
    lo = x.min(axis=0)
    span = x.max(axis=0) - lo
    safe = np.where(span > 0, span, 1.0)
    out = np.where(span > 0, (x - lo) / safe, 0.0)
    return np.clip(out, 0.0, 1.0).astype(DTYPE)


def gen_two_moons(n: int, noise_sigma: float, seed: int) -> Dataset:
    """Two interleaving half circles with Gaussian noise, scaled to [0,1]^2."""
    if n < 2:
        raise ValueError("two moons needs n >= 2")
    if n % 2:
        raise ValueError("two moons needs an even n for balanced classes")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be non-negative")
    x, y = make_moons(n_samples=n, noise=noise_sigma or None, random_state=seed, shuffle=True)
    return Dataset(normalize_unit_interval(x), y, 2)


def gen_blobs(n: int, n_classes: int, n_features: int, cluster_std: float, seed: int) -> Dataset:
    """Isotropic Gaussian blobs, one per class, scaled to [0,1]^d."""
    if n < n_classes:
        raise ValueError("need at least one sample per class")
    x, y = make_blobs(
        n_samples=n, n_features=n_features, centers=n_classes, cluster_std=cluster_std, random_state=seed
    )
    return Dataset(normalize_unit_interval(x), y, n_classes)


def split_semi(data: Dataset, n_labeled: int, seed: int) -> SemiSplit:
    """Stratified labeled subset; everything else becomes unlabeled.

    Each class receives ``n_labeled // C`` samples and the remainder is
    handed out one per class, starting from the classes picked by the seed.
    """
    if data.labels is None:
        raise ValueError("split_semi needs labels")
    n, c = len(data), data.n_classes
    if n_labeled < c:
        raise ValueError(f"cannot stratify {n_labeled} labels over {c} classes")
    if n_labeled > n:
        raise ValueError(f"n_labeled={n_labeled} exceeds dataset size {n}")
    rng = np.random.default_rng(seed)
    quota = np.full(c, n_labeled // c)
    quota[rng.permutation(c)[: n_labeled % c]] += 1
    chosen = []
    for cls in range(c):
        members = np.flatnonzero(data.labels == cls)
        if members.size < quota[cls]:
            raise ValueError(f"class {cls} has only {members.size} samples, needs {quota[cls]}")
        chosen.append(rng.permutation(members)[: quota[cls]])
    labeled_idx = np.sort(np.concatenate(chosen))
    mask = np.ones(n, dtype=bool)
    mask[labeled_idx] = False
    unlabeled_idx = np.flatnonzero(mask)
    withheld = data.labels[unlabeled_idx].copy()
    withheld.setflags(write=False)
    feats = data.features[unlabeled_idx]
    unlabeled = UnlabeledSet(feats, c, unlabeled_idx, withheld)
    return SemiSplit(data.subset(labeled_idx), unlabeled, labeled_idx, seed)


def train_test_split(data: Dataset, n_test: int, seed: int) -> tuple[Dataset, Dataset]:
    if not 0 <= n_test < len(data):
        raise ValueError(f"n_test={n_test} must be below dataset size {len(data)}")
    order = np.random.default_rng(seed).permutation(len(data))
    return data.subset(np.sort(order[n_test:])), data.subset(np.sort(order[:n_test]))


_MODES = {"weak": 0, "strong": 1}


def augment(x, spec: AugmentationSpec, mode: str, seed: int) -> np.ndarray:
    """Additive uniform noise (weak) or noise plus coordinate dropout (strong).

    Draws are a function of ``(seed, mode)`` and the row position, so the
    same row of the same batch always gets the same perturbation.
    """
    if mode not in _MODES:
        raise ValueError(f"mode must be 'weak' or 'strong', got {mode!r}")
    x = np.asarray(x, dtype=DTYPE)
    rng = np.random.default_rng([seed, _MODES[mode]])
    amp = spec.weak_noise if mode == "weak" else spec.strong_noise
    out = x + rng.uniform(-amp, amp, size=x.shape).astype(DTYPE)
    if mode == "strong" and spec.strong_dropout > 0:
        out = np.where(rng.random(size=x.shape) < spec.strong_dropout, DTYPE(0), out)
    return np.clip(out, 0, 1).astype(DTYPE)


def load_csv(path) -> Dataset:
    """Read ``f0,...,f{d-1}[,label]`` rows and min-max normalize the features."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(path, 1, "empty file") from None
        header = [h.strip() for h in header]
        has_label = bool(header) and header[-1] == "label"
        feat_cols = header[:-1] if has_label else header
        expected = [f"f{i}" for i in range(len(feat_cols))]
        if not feat_cols or feat_cols != expected:
            raise CsvFormatError(path, 1, f"unknown header {','.join(header)!r}; expected f0,...,f<d-1>[,label]")
        rows, labels = [], []
        for row in reader:
            line = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise CsvFormatError(path, line, f"expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(cell) for cell in row[: len(feat_cols)]])
                if has_label:
                    label = float(row[-1])
                    if not label.is_integer() or label < 0:
                        raise ValueError
                    labels.append(int(label))
            except ValueError:
                raise CsvFormatError(path, line, f"non-numeric or invalid cell in {row!r}") from None
    if not rows:
        raise CsvFormatError(path, 2, "no data rows")
    feats = normalize_unit_interval(np.array(rows))
    if has_label:
        y = np.array(labels)
        return Dataset(feats, y, max(2, int(y.max()) + 1))
    return Dataset(feats, None, 2)
