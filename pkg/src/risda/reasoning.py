"""Reasoning-based prototypes/covariances and the per-instance augmentation distributions."""
import math
from dataclasses import dataclass

import numpy as np

from .graph import similarity_weights, transfer_matrix
from .numeric import psd_project

HEAD_POLICIES = ("top_k", "min_count")
HEAD_AUGMENTATIONS = ("own_covariance", "none")
SCHEDULE_MODES = ("ramp_up", "ramp_down")


@dataclass(frozen=True)
class AugmentationParams:
    alpha0: float = 0.5
    beta0: float = 0.75
    epoch: int = 0
    total_epochs: int = 1
    gamma: float = 0.999
    head_policy: str = "top_k"
    # None means ceil(0.2 * C)
    head_k: int | None = None
    head_min_count: int = 100
    head_augmentation: str = "own_covariance"
    schedule_mode: str = "ramp_up"
    # transfer covariance only; the reasoning prototype shift is dropped
    covariance_only: bool = False
    renormalize: bool = False

    def __post_init__(self):
        if self.alpha0 < 0 or self.beta0 < 0:
            raise ValueError("alpha0 and beta0 must be non-negative")
        if self.total_epochs <= 0:
            raise ValueError("total_epochs must be positive")
        if not 0 <= self.epoch <= self.total_epochs:
            raise ValueError("epoch must lie in [0, total_epochs]")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.head_policy not in HEAD_POLICIES:
            raise ValueError(f"head_policy must be one of {HEAD_POLICIES}")
        if self.head_augmentation not in HEAD_AUGMENTATIONS:
            raise ValueError(f"head_augmentation must be one of {HEAD_AUGMENTATIONS}")
        if self.schedule_mode not in SCHEDULE_MODES:
            raise ValueError(f"schedule_mode must be one of {SCHEDULE_MODES}")


@dataclass(frozen=True)
class AugmentationDistribution:
    """``N(f + mean_shift, covariance)`` around one instance's feature ``f``."""

    mean_shift: np.ndarray
    covariance: np.ndarray
    is_reasoning: bool


@dataclass(frozen=True)
class ClassAugmentation:
    """Per-class inputs to the surrogate loss, already scaled by the schedule.

    ``shift[c]`` is the mean shift applied to class-``c`` instances and
    ``cov[c]`` the covariance of the transformation directions.
    """

    shift: np.ndarray
    cov: np.ndarray
    head: np.ndarray
    alpha: float
    beta: float
    # classes with statistics; None means all of them
    available: np.ndarray | None = None

    def __post_init__(self):
        if self.available is None:
            object.__setattr__(self, "available", np.ones(self.shift.shape[0], dtype=bool))

    @property
    def num_classes(self):
        return self.shift.shape[0]

    def distribution(self, c):
        return AugmentationDistribution(
            self.shift[c].copy(), psd_project(self.cov[c]), not bool(self.head[c])
        )


def schedule(params):
    """Current ``(alpha, beta)``: a linear ramp in ``t / T`` (or its reverse)."""
    frac = params.epoch / params.total_epochs
    if params.schedule_mode == "ramp_down":
        frac = 1.0 - frac
    return params.alpha0 * frac, params.beta0 * frac


def head_classes(counts, params):
    """Boolean mask of head classes under the configured policy."""
    counts = np.asarray(counts)
    C = counts.shape[0]
    if params.head_policy == "min_count":
        return counts > params.head_min_count
    k = math.ceil(0.2 * C) if params.head_k is None else params.head_k
    if not 0 <= k <= C:
        raise ValueError(f"head_k={k} outside [0, {C}]")
    # ties broken by class index, so the split is deterministic
    order = np.argsort(-counts, kind="stable")
    mask = np.zeros(C, dtype=bool)
    mask[order[:k]] = True
    return mask


def reasoning_prototype(c, graph, bank, renormalize=False):
    """Similarity-weighted sum of the other classes' prototypes."""
    w = similarity_weights(graph, c, renormalize)
    return w @ bank.means


def reasoning_covariance(c, graph, bank, renormalize=False):
    """Similarity-weighted sum of the other classes' covariances."""
    w = similarity_weights(graph, c, renormalize)
    cov = np.tensordot(w, bank.covs, axes=1)
    return 0.5 * (cov + cov.T)


def build_class_augmentation(graph, bank, params, head, reasoning_on=True):
    """Scaled mean shifts and covariances for every class.

    Tail classes get ``alpha * mu_r`` and ``beta * (Sigma + Sigma_r)``.  Head
    classes get ``beta * Sigma`` (``own_covariance``) or nothing (``none``).
    With ``reasoning_on=False`` the transfer terms vanish, which is plain
    class-conditional implicit augmentation.
    """
    alpha, beta = schedule(params)
    head = np.asarray(head, dtype=bool)
    T = transfer_matrix(graph, params.renormalize)
    if not reasoning_on:
        T = np.zeros_like(T)
    mu_r = T @ bank.means
    sigma_r = np.tensordot(T, bank.covs, axes=1)
    sigma_r = 0.5 * (sigma_r + np.swapaxes(sigma_r, 1, 2))

    shift = alpha * mu_r
    if params.covariance_only:
        shift = np.zeros_like(shift)
    cov = beta * (bank.covs + sigma_r)
    shift[head] = 0.0
    if params.head_augmentation == "own_covariance":
        cov[head] = beta * bank.covs[head]
    else:
        cov[head] = 0.0
    return ClassAugmentation(shift, cov, head, alpha, beta, bank.counts > 0)


def augmentation_for(f, c, graph, bank, params, head):
    """Augmentation distribution for one instance of class ``c`` (centred on ``f``)."""
    aug = build_class_augmentation(graph, bank, params, head)
    dist = aug.distribution(c)
    if dist.mean_shift.shape != np.shape(f):
        raise ValueError("feature dimension does not match the statistics bank")
    return dist
