"""Synthetic long-tailed datasets and CSV feature files."""
import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class LongTailSpec:
    num_classes: int = 10
    max_count: int = 500
    imbalance_factor: float = 100.0
    input_dim: int = 20
    class_mean_scale: float = 2.0
    class_cov_scale: float = 1.0
    test_per_class: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.max_count < 1:
            raise ValueError("max_count must be >= 1")
        if self.imbalance_factor < 1:
            raise ValueError("imbalance_factor must be >= 1")
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")


@dataclass
class Dataset:
    """Feature rows ``x`` (n, d) with integer labels ``y`` in ``[0, num_classes)``."""

    x: np.ndarray
    y: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.x.ndim != 2 or self.y.shape != (self.x.shape[0],):
            raise ValueError(f"inconsistent shapes x={self.x.shape} y={self.y.shape}")
        if self.y.size and (self.y.min() < 0 or self.y.max() >= self.num_classes):
            raise ValueError("label out of range")

    def __len__(self):
        return self.x.shape[0]

    @property
    def dim(self):
        return self.x.shape[1]

    @property
    def class_counts(self):
        return np.bincount(self.y, minlength=self.num_classes)


def class_counts(spec):
    """Exponential long-tail profile ``N_c = round(N_1 * lambda^(-c/(C-1)))``, clamped to >= 1."""
    C = spec.num_classes
    counts = []
    for c in range(C):
        n = spec.max_count * spec.imbalance_factor ** (-c / (C - 1))
        counts.append(max(1, int(math.floor(n + 0.5))))
    return np.array(counts, dtype=np.int64)


def _class_generators(spec, rng):
    d = spec.input_dim
    directions = rng.standard_normal((spec.num_classes, d))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    means = spec.class_mean_scale * directions
    # a shared transformation basis plus a class-specific one, so neighbouring
    # classes really do carry transferable variation
    shared = rng.standard_normal((d, d)) / math.sqrt(d)
    factors = []
    for _ in range(spec.num_classes):
        own = rng.standard_normal((d, d)) / math.sqrt(d)
        A = math.sqrt(0.5) * (shared + own)
        # normalise so the average per-coordinate variance is class_cov_scale**2
        A *= spec.class_cov_scale / math.sqrt(np.sum(A * A) / d)
        factors.append(A)
    return means, np.stack(factors)


def generating_distributions(spec):
    """The per-class means and covariances that :func:`synthesize` samples from."""
    rng = np.random.default_rng(spec.seed)
    means, factors = _class_generators(spec, rng)
    covs = np.einsum("cij,ckj->cik", factors, factors)
    return means, covs


def _draw(counts, means, factors, rng):
    xs, ys = [], []
    for c, n in enumerate(counts):
        z = rng.standard_normal((int(n), means.shape[1]))
        xs.append(means[c] + z @ factors[c].T)
        ys.append(np.full(int(n), c, dtype=np.int64))
    return np.concatenate(xs), np.concatenate(ys)


def synthesize(spec):
    """Return ``(train, test)``: long-tailed train split and a balanced test split."""
    rng = np.random.default_rng(spec.seed)
    means, factors = _class_generators(spec, rng)
    train_x, train_y = _draw(class_counts(spec), means, factors, rng)
    test_counts = np.full(spec.num_classes, spec.test_per_class)
    test_x, test_y = _draw(test_counts, means, factors, rng)
    return (
        Dataset(train_x, train_y, spec.num_classes),
        Dataset(test_x, test_y, spec.num_classes),
    )


def _is_number(s):
    try:
        float(s)
    except ValueError:
        return False
    return True


def load_csv(path, num_classes=None):
    """Read rows ``x_1,...,x_d,label``; a single non-numeric first line is taken as a header."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [(i + 1, row) for i, row in enumerate(csv.reader(fh)) if row and any(s.strip() for s in row)]
    if rows and not all(_is_number(s) for s in rows[0][1]):
        rows = rows[1:]
    if not rows:
        raise ValueError(f"{path}: no data rows")

    dim = None
    xs, ys = [], []
    for lineno, row in rows:
        if len(row) < 2:
            raise ValueError(f"{path}:{lineno}: expected at least one feature and a label")
        if dim is None:
            dim = len(row) - 1
        elif len(row) - 1 != dim:
            raise ValueError(f"{path}:{lineno}: expected {dim} features, got {len(row) - 1}")
        try:
            feats = [float(s) for s in row[:-1]]
            label = float(row[-1])
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: malformed row ({exc})") from None
        if label != int(label) or label < 0:
            raise ValueError(f"{path}:{lineno}: label must be a non-negative integer")
        if not all(math.isfinite(v) for v in feats):
            raise ValueError(f"{path}:{lineno}: non-finite feature value")
        xs.append(feats)
        ys.append(int(label))

    y = np.array(ys, dtype=np.int64)
    C = int(y.max()) + 1 if num_classes is None else num_classes
    return Dataset(np.array(xs, dtype=np.float64), y, C)


def write_csv(dataset, path):
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x{i + 1}" for i in range(dataset.dim)] + ["label"])
        for row, label in zip(dataset.x, dataset.y):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])
