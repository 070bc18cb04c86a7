"""Oracle checks run by ``risda verify``.

Each check compares an analytic route against an independent one (Monte
Carlo, brute-force loops, central differences) and returns a
:class:`CheckResult` with the measured worst case and the tolerance it was
held to.
"""
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import loss as L
from .graph import build_graph
from .net import MlpConfig, backward, cross_entropy, forward, init_state
from .reasoning import AugmentationDistribution, ClassAugmentation
from .stats import StatsBank

FD_STEP = 1e-5
FD_REL_TOL = 1e-5
# gradient magnitudes below this are compared on an absolute scale
FD_FLOOR = 1e-4


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    tolerance: float
    detail: str = ""

    def __post_init__(self):
        self.passed = bool(self.passed)
        self.measured = float(self.measured)

    def to_dict(self):
        return asdict(self)


def random_psd(rng, d, scale=1.0, rank=None):
    r = d if rank is None else rank
    A = rng.standard_normal((d, r))
    return scale * (A @ A.T) / r


def random_instance(rng, C, d):
    """A small classifier plus one instance and its augmentation distribution."""
    W = rng.standard_normal((C, d)) / math.sqrt(d)
    b = 0.5 * rng.standard_normal(C)
    f = rng.standard_normal(d)
    y = int(rng.integers(C))
    shift = 0.5 * rng.standard_normal(d)
    rank = int(rng.integers(1, d + 1))
    cov = random_psd(rng, d, scale=rng.uniform(0.1, 1.5), rank=rank)
    return W, b, f, y, AugmentationDistribution(shift, cov, True)


def check_jensen_bound(n_instances=200, M=100_000, seed=0):
    rng = np.random.default_rng(seed)
    worst = -math.inf
    failures = 0
    for k in range(n_instances):
        C = (3, 5)[k % 2]
        d = (4, 8)[(k // 2) % 2]
        W, b, f, y, dist = random_instance(rng, C, d)
        bound = L.surrogate_term(f, y, dist, W, b)
        mean, stderr = L.mc_loss_oracle(f, y, dist, W, b, M, rng)
        # >0 means the Monte-Carlo mean sits above the bound by that many stderrs
        excess = (mean - bound) / stderr if stderr > 0 else (0.0 if mean <= bound else math.inf)
        worst = max(worst, excess)
        failures += excess > 3.0
    return CheckResult(
        "jensen_bound", failures == 0, worst, 3.0,
        f"{n_instances - failures}/{n_instances} instances with MC mean <= bound + 3 stderr (M={M})",
    )


def check_mgf(n_cases=20, M=1_000_000, seed=1):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_cases):
        mu = rng.uniform(-1.0, 1.0)
        var = rng.uniform(0.0, 1.0)
        t = rng.uniform(-1.0, 1.0)
        emp, ana = L.mgf_check(mu, var, t, M, rng)
        worst = max(worst, abs(emp - ana) / ana)
    return CheckResult("mgf_identity", worst <= 0.01, worst, 0.01, f"{n_cases} cases, M={M}")


def reference_ce(logits, labels):
    """Mean cross-entropy written out sample by sample."""
    total = 0.0
    for row, y in zip(logits, labels):
        m = max(row)
        total += m + math.log(sum(math.exp(v - m) for v in row)) - row[y]
    return total / len(labels)


def _zero_aug(C, d):
    return ClassAugmentation(np.zeros((C, d)), np.zeros((C, d, d)), np.zeros(C, dtype=bool), 0.0, 0.0)


def check_ce_degeneration(n_batches=100, seed=2):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_batches):
        C, d, n = int(rng.integers(2, 8)), int(rng.integers(1, 10)), int(rng.integers(1, 20))
        F = rng.standard_normal((n, d))
        W = rng.standard_normal((C, d))
        b = rng.standard_normal(C)
        y = rng.integers(C, size=n)
        res = L.risda_loss(F, y, W, b, _zero_aug(C, d))
        worst = max(worst, abs(res.loss - reference_ce(F @ W.T + b, y)))
    return CheckResult("ce_degeneration", worst <= 1e-12, worst, 1e-12, f"{n_batches} random batches")


def fd_rel_error(analytic, numeric):
    a = np.asarray(analytic)
    n = np.asarray(numeric)
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), FD_FLOOR), initial=0.0))


def central_difference(fn, x, h=FD_STEP):
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = fn()
        flat[i] = old - h
        down = fn()
        flat[i] = old
        gflat[i] = (up - down) / (2 * h)
    return g


def random_class_augmentation(rng, C, d):
    shift = 0.5 * rng.standard_normal((C, d))
    cov = np.stack([random_psd(rng, d, rng.uniform(0.1, 1.0)) for _ in range(C)])
    head = rng.random(C) < 0.3
    return ClassAugmentation(shift, cov, head, 1.0, 1.0)


def check_loss_gradients(n_instances=100, seed=3):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in range(n_instances):
        C, d, n = int(rng.integers(2, 6)), int(rng.integers(1, 9)), int(rng.integers(1, 5))
        F = rng.standard_normal((n, d))
        W = rng.standard_normal((C, d)) / math.sqrt(d)
        b = rng.standard_normal(C)
        y = rng.integers(C, size=n)
        aug = random_class_augmentation(rng, C, d)
        weights = rng.uniform(0.1, 2.0, C) if k % 2 else None
        mode = ("label", "printed")[k % 3 == 2]
        res = L.risda_loss(F, y, W, b, aug, weights, mode)

        def value():
            return L.risda_loss(F, y, W, b, aug, weights, mode).loss

        # the logit block: perturb Z directly through an additive offset
        offset = np.zeros((n, C))

        def value_logits():
            Z = res.Z + offset
            zmax = Z.max(axis=1, keepdims=True)
            lse = np.log(np.exp(Z - zmax).sum(axis=1)) + zmax[:, 0]
            rho = np.ones(C) if weights is None else weights
            return float(np.sum(rho[y] * (lse - Z[np.arange(n), y])) / n)

        for analytic, arr, fn in (
            (res.grad_W, W, value),
            (res.grad_b, b, value),
            (res.grad_features, F, value),
            (res.grad_logits, offset, value_logits),
        ):
            worst = max(worst, fd_rel_error(analytic, central_difference(fn, arr)))
    return CheckResult(
        "loss_gradients", worst < FD_REL_TOL, worst, FD_REL_TOL,
        f"{n_instances} instances; logits, W, b, features blocks",
    )


def check_network_gradients(n_instances=100, seed=4):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        cfg = MlpConfig(
            input_dim=int(rng.integers(1, 6)),
            hidden_dims=tuple(int(h) for h in rng.integers(1, 8, size=int(rng.integers(0, 3)))),
            feature_dim=int(rng.integers(1, 9)),
            num_classes=int(rng.integers(2, 6)),
            seed=int(rng.integers(2**31)),
        )
        state = init_state(cfg)
        for p in state.params.values():
            p += 0.1 * rng.standard_normal(p.shape)
        X = rng.standard_normal((int(rng.integers(1, 5)), cfg.input_dim))
        y = rng.integers(cfg.num_classes, size=X.shape[0])

        def value():
            return cross_entropy(forward(state, X)[1], y)[0]

        _, logits, acts = forward(state, X, return_cache=True)
        grads = backward(state, acts, grad_logits=cross_entropy(logits, y)[1])
        for name, p in state.params.items():
            worst = max(worst, fd_rel_error(grads[name], central_difference(value, p)))
    return CheckResult("network_gradients", worst < FD_REL_TOL, worst, FD_REL_TOL, f"{n_instances} tiny MLPs under CE")


def two_pass_stats(F):
    n, d = F.shape
    mu = [sum(F[i, m] for i in range(n)) / n for m in range(d)]
    cov = np.zeros((d, d))
    if n > 1:
        for m in range(d):
            for k in range(d):
                cov[m, k] = sum((F[i, m] - mu[m]) * (F[i, k] - mu[k]) for i in range(n)) / (n - 1)
    return np.array(mu), cov


def check_stats_merge(n_trials=20, seed=5):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_trials):
        C, d, n = int(rng.integers(2, 5)), int(rng.integers(1, 5)), int(rng.integers(6, 60))
        F = rng.standard_normal((n, d)) * rng.uniform(0.5, 5.0) + rng.uniform(-10, 10)
        y = rng.integers(C, size=n)
        order = rng.permutation(n)
        cuts = np.sort(rng.choice(np.arange(1, n), size=2, replace=False))
        bank = StatsBank(C, d)
        for part in np.split(order, cuts):
            bank.update_batch(F[part], y[part])
        for c in range(C):
            Fc = F[y == c]
            if len(Fc) == 0:
                continue
            mu, cov = two_pass_stats(Fc)
            worst = max(worst, float(np.max(np.abs(bank.means[c] - mu))), float(np.max(np.abs(bank.covs[c] - cov))))
    return CheckResult("stats_merge", worst <= 1e-10, worst, 1e-10, f"{n_trials} random 3-way batch splits")


def check_graph_rows(n_trials=50, seed=6):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_trials):
        C = int(rng.integers(2, 12))
        true = rng.integers(C, size=int(rng.integers(1, 500)))
        pred = rng.integers(C, size=true.size)
        g = build_graph(pred, true, C)
        sums = g.eps.sum(axis=1)[~g.empty]
        worst = max(worst, float(np.max(np.abs(sums - 1.0))))
    return CheckResult("graph_rows", worst <= 1e-12, worst, 1e-12, f"{n_trials} random confusion graphs")


def check_surrogate_identity(n_instances=100, seed=7):
    """Softmax-CE over the shifted logits equals ``log sum_j exp(A_j)`` built from the difference form."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        C, d = int(rng.integers(2, 6)), int(rng.integers(1, 9))
        W, b, f, y, _ = random_instance(rng, C, d)
        mu_r = rng.standard_normal(d)
        cov = random_psd(rng, d)
        alpha, beta = rng.uniform(0, 1.5), rng.uniform(0, 1.5)
        Z = L.surrogate_logits(W @ f + b, W, y, mu_r, cov, alpha, beta)
        zmax = Z.max()
        ce = math.log(np.exp(Z - zmax).sum()) + zmax - Z[y]
        A = []
        for j in range(C):
            dw = W[j] - W[y]
            sigma = beta * sum(dw[m] * cov[m, k] * dw[k] for m in range(d) for k in range(d))
            A.append(float(dw @ (f + alpha * mu_r)) + (b[j] - b[y]) + 0.5 * sigma)
        amax = max(A)
        ref = amax + math.log(sum(math.exp(a - amax) for a in A))
        worst = max(worst, abs(ce - ref))
    return CheckResult("surrogate_identity", worst <= 1e-12, worst, 1e-12, f"{n_instances} instances")


CHECKS = {
    "jensen_bound": check_jensen_bound,
    "mgf_identity": check_mgf,
    "ce_degeneration": check_ce_degeneration,
    "loss_gradients": check_loss_gradients,
    "network_gradients": check_network_gradients,
    "stats_merge": check_stats_merge,
    "graph_rows": check_graph_rows,
    "surrogate_identity": check_surrogate_identity,
}


def run_all(names=None):
    return [CHECKS[n]() for n in (names or CHECKS)]
