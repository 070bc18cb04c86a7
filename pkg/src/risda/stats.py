"""Per-class feature prototypes and covariances with exact batch-by-batch updates.

Each class keeps ``(count, mean, m2)`` where ``m2`` is the centred sum of outer
products.  Batches are folded in with the pooled two-group merge, so any
partition of the data into batches, in any order, gives the same statistics
as a single pass.
"""
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


def prototype(features):
    """Class prototype: the mean feature vector."""
    F = np.asarray(features, dtype=np.float64)
    if F.ndim != 2 or F.shape[0] == 0:
        raise ValueError("prototype needs a non-empty (n, d) array of features")
    return F.mean(axis=0)


def covariance(features, mu=None):
    """Unbiased covariance with an ``n - 1`` denominator.

    Returns ``(cov, degenerate)``; fewer than two features give the zero
    matrix with ``degenerate=True``.
    """
    F = np.asarray(features, dtype=np.float64)
    if F.ndim != 2:
        raise ValueError("covariance needs an (n, d) array of features")
    n, d = F.shape
    if n < 2:
        return np.zeros((d, d)), True
    mu = F.mean(axis=0) if mu is None else np.asarray(mu, dtype=np.float64)
    D = F - mu
    cov = D.T @ D / (n - 1)
    return 0.5 * (cov + cov.T), False


@dataclass
class ClassStats:
    label: int
    count: int
    mean: np.ndarray
    cov: np.ndarray


class StatsBank:
    """Running prototypes ``means[c]`` and covariances ``covs[c]`` for all classes."""

    def __init__(self, num_classes, dim):
        self.num_classes = num_classes
        self.dim = dim
        self.counts = np.zeros(num_classes, dtype=np.int64)
        self.means = np.zeros((num_classes, dim))
        self.m2 = np.zeros((num_classes, dim, dim))
        self.covs = np.zeros((num_classes, dim, dim))

    def copy(self):
        other = StatsBank(self.num_classes, self.dim)
        other.counts = self.counts.copy()
        other.means = self.means.copy()
        other.m2 = self.m2.copy()
        other.covs = self.covs.copy()
        return other

    def __getitem__(self, c):
        return ClassStats(c, int(self.counts[c]), self.means[c], self.covs[c])

    def _refresh_cov(self, c):
        n = self.counts[c]
        if n <= 1:
            self.covs[c] = 0.0
        else:
            cov = self.m2[c] / (n - 1)
            self.covs[c] = 0.5 * (cov + cov.T)

    def update_batch(self, features, labels):
        """Fold one batch of features into the bank (in place); returns ``self``."""
        F = np.asarray(features, dtype=np.float64)
        y = np.asarray(labels)
        if F.ndim != 2 or F.shape[1] != self.dim or y.shape != (F.shape[0],):
            raise ValueError(f"batch shapes {F.shape}/{y.shape} do not match dim={self.dim}")
        if y.size and (y.min() < 0 or y.max() >= self.num_classes):
            raise ValueError(f"label outside [0, {self.num_classes})")
        for c in np.unique(y):
            Fc = F[y == c]
            nb = Fc.shape[0]
            mb = Fc.mean(axis=0)
            D = Fc - mb
            m2b = D.T @ D
            na = self.counts[c]
            n = na + nb
            delta = mb - self.means[c]
            self.means[c] = self.means[c] + delta * (nb / n)
            self.m2[c] = self.m2[c] + m2b + np.outer(delta, delta) * (na * nb / n)
            self.counts[c] = n
            self._refresh_cov(c)
        return self

    def to_dict(self):
        return {
            "num_classes": int(self.num_classes),
            "feature_dim": int(self.dim),
            "classes": [
                {
                    "class": c,
                    "count": int(self.counts[c]),
                    "mean": self.means[c].tolist(),
                    "covariance": self.covs[c].tolist(),
                }
                for c in range(self.num_classes)
            ],
        }

    def dump(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True) + "\n")


def bank_from_features(features, labels, num_classes, batch_size=None):
    F = np.asarray(features, dtype=np.float64)
    bank = StatsBank(num_classes, F.shape[1])
    step = F.shape[0] if not batch_size else batch_size
    for start in range(0, F.shape[0], max(step, 1)):
        bank.update_batch(F[start:start + step], np.asarray(labels)[start:start + step])
    return bank


def ema_refresh(old, new, momentum):
    """Blend two banks: ``momentum * old + (1 - momentum) * new`` on means and covariances."""
    if not 0.0 <= momentum <= 1.0:
        raise ValueError("momentum must lie in [0, 1]")
    if momentum == 0.0:
        return new.copy()
    if momentum == 1.0:
        return old.copy()
    out = new.copy()
    m = momentum
    out.means = m * old.means + (1 - m) * new.means
    out.covs = m * old.covs + (1 - m) * new.covs
    out.m2 = m * old.m2 + (1 - m) * new.m2
    return out
