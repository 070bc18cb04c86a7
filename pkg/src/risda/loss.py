"""Surrogate upper-bound loss for infinite implicit augmentation, plus its Monte-Carlo oracles.

For an instance with feature ``f``, label ``y`` and augmentation
``N(f + s_y, S_y)`` the expected cross-entropy is bounded (Jensen) by the
cross-entropy over the shifted logits

    Z_j = yhat_j + (w_j - w_y)^T s_y + 1/2 (w_j - w_y)^T S_y (w_j - w_y).

Per-class ``s_y`` and ``S_y`` come from :class:`risda.reasoning.ClassAugmentation`,
with the schedule strengths already folded in.
"""
import math
from dataclasses import dataclass

import numpy as np

from .numeric import quadratic_form, sample_gaussian

MU_INDEX_MODES = ("label", "printed")


@dataclass
class SurrogateLossResult:
    loss: float
    Z: np.ndarray
    per_sample: np.ndarray
    grad_logits: np.ndarray
    grad_W: np.ndarray
    grad_b: np.ndarray
    grad_features: np.ndarray


def class_weight(count, gamma):
    """Effective-number weight ``(1 - gamma) / (1 - gamma**count)``."""
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    if count < 1:
        raise ValueError("count must be >= 1")
    log_g = math.log(gamma)
    return math.expm1(log_g) / math.expm1(count * log_g)


def class_weights(counts, gamma, normalize=False):
    rho = np.array([class_weight(int(n), gamma) if n >= 1 else 0.0 for n in counts])
    if normalize:
        present = np.asarray(counts) >= 1
        rho = rho * present.sum() / rho[present].sum()
    return rho


def sigma_ij(w_j, w_y, cov_total, beta):
    """Variance of the logit difference ``(w_j - w_y)^T f~`` under ``beta * cov_total``."""
    return beta * quadratic_form(np.asarray(w_j) - np.asarray(w_y), cov_total)


def surrogate_logits(logits, W, y, mu_r, cov_total, alpha, beta):
    """Shifted logits ``Z`` for one instance (the ``j == y`` entry is left unchanged)."""
    logits = np.asarray(logits, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    D = W - W[y]
    sigma = beta * np.einsum("jd,de,je->j", D, cov_total, D)
    return logits + alpha * (D @ mu_r) + 0.5 * sigma


def _log_softmax_ce(Z, labels):
    n = Z.shape[0]
    zmax = Z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(Z - zmax).sum(axis=1)) + zmax[:, 0]
    return lse - Z[np.arange(n), labels], lse


def _pairwise_terms(W, shift, cov, mu_index):
    """``K[y, j]`` added to logit ``j`` for label ``y``, and ``Q = dK[y, j] / dw_j``."""
    D = W[None, :, :] - W[:, None, :]
    if mu_index == "label":
        M = np.broadcast_to(shift[:, None, :], D.shape)
    elif mu_index == "printed":
        M = np.broadcast_to(shift[None, :, :], D.shape)
    else:
        raise ValueError(f"mu_index must be one of {MU_INDEX_MODES}")
    SD = np.einsum("yde,yje->yjd", cov, D)
    K = np.einsum("yjd,yjd->yj", D, M) + 0.5 * np.einsum("yjd,yjd->yj", D, SD)
    return K, M + SD


def risda_loss(features, labels, W, b, aug, weights=None, mu_index="label"):
    """Weighted surrogate loss over a batch, with gradients.

    ``weights`` holds per-class ``rho``; ``None`` means unit weights.  The
    loss is ``mean_i rho[y_i] * CE(Z_i, y_i)``.  Logits are ``f W^T + b``;
    ``grad_logits`` is the derivative w.r.t. those logits, while ``grad_W``,
    ``grad_b`` and ``grad_features`` are total derivatives (through the logits
    and the augmentation terms).  Statistics in ``aug`` are constants.
    """
    F = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    W = np.asarray(W, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n = F.shape[0]
    C = W.shape[0]
    if labels.shape != (n,) or F.shape[1] != W.shape[1] or aug.shift.shape != (C, W.shape[1]):
        raise ValueError("inconsistent shapes between features, labels, classifier and augmentation")
    missing = [int(c) for c in np.unique(labels) if not aug.available[c]]
    if missing:
        raise ValueError(f"no statistics for classes {missing} present in the batch")

    K, Q = _pairwise_terms(W, aug.shift, aug.cov, mu_index)
    logits = F @ W.T + b
    Z = logits + K[labels]
    per_sample, lse = _log_softmax_ce(Z, labels)

    rho = np.ones(C) if weights is None else np.asarray(weights, dtype=np.float64)
    s = rho[labels] / n
    loss = float(s @ per_sample)

    G = np.exp(Z - lse[:, None])
    G[np.arange(n), labels] -= 1.0
    G *= s[:, None]

    Gc = np.zeros((C, C))
    np.add.at(Gc, labels, G)
    grad_W = G.T @ F + np.einsum("yj,yjd->jd", Gc, Q) - np.einsum("yj,yjd->yd", Gc, Q)
    return SurrogateLossResult(
        loss=loss,
        Z=Z,
        per_sample=per_sample,
        grad_logits=G,
        grad_W=grad_W,
        grad_b=G.sum(axis=0),
        grad_features=G @ W,
    )


def surrogate_term(f, y, dist, W, b):
    """Per-instance upper bound for augmentation ``dist`` (a single term of the surrogate loss)."""
    f = np.asarray(f, dtype=np.float64)
    logits = np.asarray(W) @ f + b
    Z = surrogate_logits(logits, W, y, dist.mean_shift, dist.covariance, 1.0, 1.0)
    zmax = Z.max()
    return float(math.log(np.exp(Z - zmax).sum()) + zmax - Z[y])


def mc_loss_oracle(f, y, dist, W, b, M, rng):
    """Monte-Carlo estimate of the expected CE over ``N(f + shift, cov)``; returns ``(mean, stderr)``."""
    if M < 1:
        raise ValueError("M must be >= 1")
    f = np.asarray(f, dtype=np.float64)
    draws = sample_gaussian(f + dist.mean_shift, dist.covariance, rng, size=M)
    logits = draws @ np.asarray(W).T + b
    ce, _ = _log_softmax_ce(logits, np.full(M, y))
    stderr = float(ce.std(ddof=1) / math.sqrt(M)) if M > 1 else 0.0
    return float(ce.mean()), stderr


def mgf_check(mu, var, t, M, rng):
    """Return ``(empirical, analytic)`` values of ``E[exp(tX)]`` for ``X ~ N(mu, var)``."""
    if M < 1:
        raise ValueError("M must be >= 1")
    x = mu + math.sqrt(var) * rng.standard_normal(M)
    return float(np.exp(t * x).mean()), math.exp(t * mu + 0.5 * var * t * t)


def _class_average(values, labels, weights):
    total = 0.0
    for c in np.unique(labels):
        idx = labels == c
        rho = 1.0 if weights is None else float(weights[c])
        total += rho * values[idx].sum() / idx.sum()
    return total


def explicit_augment_loss(features, labels, distributions, M, W, b, rng, weights=None):
    """Finite-``M`` explicit augmentation loss, class-averaged.

    Each instance ``i`` is replaced by ``M`` draws from ``distributions[i]``
    (a zero distribution leaves it unaugmented); CE is averaged over the
    draws, then within each class, then summed over classes.  Returns
    ``(value, stderr)``.
    """
    labels = np.asarray(labels, dtype=np.int64)
    means = np.empty(len(labels))
    errs = np.empty(len(labels))
    for i, (f, y) in enumerate(zip(features, labels)):
        means[i], errs[i] = mc_loss_oracle(f, int(y), distributions[i], W, b, M, rng)
    value = _class_average(means, labels, weights)
    var = 0.0
    for c in np.unique(labels):
        idx = labels == c
        rho = 1.0 if weights is None else float(weights[c])
        var += (rho / idx.sum()) ** 2 * np.sum(errs[idx] ** 2)
    return value, math.sqrt(var)


def surrogate_bound(features, labels, distributions, W, b, weights=None):
    """Class-averaged surrogate bound matching :func:`explicit_augment_loss`."""
    labels = np.asarray(labels, dtype=np.int64)
    terms = np.array(
        [surrogate_term(f, int(y), distributions[i], W, b) for i, (f, y) in enumerate(zip(features, labels))]
    )
    return _class_average(terms, labels, weights)
