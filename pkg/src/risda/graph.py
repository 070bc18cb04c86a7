"""Category-to-category knowledge graph built from classifier confusion."""
import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class KnowledgeGraph:
    """``eps[i, j]`` is the fraction of class-``i`` training samples predicted as ``j``."""

    eps: np.ndarray
    # classes with no samples; their rows are all zero
    empty: np.ndarray

    @property
    def num_classes(self):
        return self.eps.shape[0]

    @classmethod
    def identity(cls, num_classes):
        return cls(np.eye(num_classes), np.zeros(num_classes, dtype=bool))

    def to_csv(self, path):
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([""] + list(range(self.num_classes)))
            for i, row in enumerate(self.eps):
                writer.writerow([i] + [repr(float(v)) for v in row])


def build_graph(predicted, true, num_classes):
    predicted = np.asarray(predicted, dtype=np.int64)
    true = np.asarray(true, dtype=np.int64)
    if predicted.shape != true.shape or predicted.ndim != 1:
        raise ValueError("predicted and true labels must be equal-length 1-D sequences")
    for name, arr in (("predicted", predicted), ("true", true)):
        if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
            raise ValueError(f"{name} label outside [0, {num_classes})")
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(confusion, (true, predicted), 1)
    counts = confusion.sum(axis=1)
    empty = counts == 0
    eps = np.zeros((num_classes, num_classes))
    eps[~empty] = confusion[~empty] / counts[~empty, None]
    return KnowledgeGraph(eps, empty)


def build_soft_graph(probabilities, true, num_classes):
    """Expected confusion: ``eps[i, j]`` is the mean predicted probability of ``j`` over class ``i``.

    This is the expectation of the hard count under the classifier's own
    predictive distribution; it stays informative when the training set is
    fitted perfectly and the hard graph collapses to the identity.
    """
    P = np.asarray(probabilities, dtype=np.float64)
    true = np.asarray(true, dtype=np.int64)
    if P.ndim != 2 or P.shape != (true.shape[0], num_classes):
        raise ValueError(f"probabilities of shape {P.shape} do not match {true.shape[0]} labels x {num_classes} classes")
    if true.size and (true.min() < 0 or true.max() >= num_classes):
        raise ValueError(f"true label outside [0, {num_classes})")
    sums = np.zeros((num_classes, num_classes))
    np.add.at(sums, true, P)
    counts = np.bincount(true, minlength=num_classes)
    empty = counts == 0
    eps = np.zeros((num_classes, num_classes))
    eps[~empty] = sums[~empty] / counts[~empty, None]
    return KnowledgeGraph(eps, empty)


def read_graph_csv(path):
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    eps = np.array([[float(v) for v in row[1:]] for row in rows[1:]])
    return KnowledgeGraph(eps, eps.sum(axis=1) == 0)


def similarity_weights(graph, c, renormalize=False):
    """Transfer weights of class ``c`` towards every class, with the entry for ``c`` itself zero.

    Raw mode returns row ``c`` of ``eps`` off the diagonal.  Renormalized mode
    rescales those weights to sum to one (all zeros when there is no
    off-diagonal mass).
    """
    w = graph.eps[c].copy()
    w[c] = 0.0
    if renormalize:
        total = w.sum()
        if total > 0:
            w /= total
    return w


def transfer_matrix(graph, renormalize=False):
    """All rows of :func:`similarity_weights` stacked into a ``(C, C)`` matrix."""
    return np.stack([similarity_weights(graph, c, renormalize) for c in range(graph.num_classes)])
