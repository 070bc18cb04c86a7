"""Two-stage training: plain CE on the long-tailed data, then fine-tuning with the surrogate loss."""
import csv
import dataclasses
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dataset as ds
from .graph import KnowledgeGraph, build_graph, build_soft_graph
from .loss import class_weights, risda_loss
from .net import MlpConfig, SgdConfig, backward, clip_gradients, cross_entropy, forward, init_state, sgd_step
from .reasoning import AugmentationParams, build_class_augmentation, head_classes
from .stats import bank_from_features, ema_refresh

log = logging.getLogger(__name__)

SENSITIVITY_GRID = (0.25, 0.50, 0.75, 1.00, 1.25, 1.50)
ABLATIONS = {
    "risda": {},
    "wo_r": {"reasoning_on": False},
    "wo_w": {"reweight_on": False},
}
CURVE_COLUMNS = ("epoch", "train_loss", "test_error", "head_error", "tail_error")


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    # data: synthetic unless both CSV paths are given
    train_csv: str | None = None
    test_csv: str | None = None
    num_classes: int = 10
    max_count: int = 500
    imbalance_factor: float = 100.0
    input_dim: int = 20
    class_mean_scale: float = 2.0
    class_cov_scale: float = 1.0
    test_per_class: int = 100
    # None ties the synthetic data to the run seed
    data_seed: int | None = None
    # network and optimizer
    hidden_dims: list = field(default_factory=lambda: [64, 64])
    feature_dim: int | None = 16
    init_scale: float = 1.0
    base_lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    warmup_epochs: int = 5
    decay_epochs: list = field(default_factory=lambda: [48, 54])
    decay_factor: float = 0.2
    batch_size: int = 50
    total_epochs: int = 60
    # None means round(0.8 * total_epochs)
    stage1_epochs: int | None = None
    # stage-II objective: "risda" or plain "ce"
    loss: str = "risda"
    alpha0: float = 0.5
    beta0: float = 0.75
    gamma: float = 0.999
    head_policy: str = "top_k"
    head_k: int | None = None
    head_min_count: int = 100
    head_augmentation: str = "own_covariance"
    schedule_mode: str = "ramp_up"
    covariance_only: bool = False
    renormalize_graph: bool = True
    # "hard" counts argmax confusions, "soft" averages predicted probabilities
    graph_mode: str = "soft"
    mu_index: str = "label"
    normalize_weights: bool = True
    reweight_on: bool = True
    reasoning_on: bool = True
    # 0 keeps the stage-I statistics and graph frozen
    stats_refresh_period: int = 1
    stats_ema: float = 0.0
    freeze_features: bool = False
    reset_momentum: bool = False
    # joint gradient-norm cap during stage II (None disables)
    stage2_grad_clip: float | None = 5.0
    seeds: list = field(default_factory=lambda: [0])

    def __post_init__(self):
        if self.loss not in ("risda", "ce"):
            raise ValueError(f"loss must be 'risda' or 'ce', got {self.loss!r}")
        if self.stage1_epochs is not None and not 0 <= self.stage1_epochs <= self.total_epochs:
            raise ValueError("stage1_epochs must lie in [0, total_epochs]")
        if self.graph_mode not in ("hard", "soft"):
            raise ValueError(f"graph_mode must be 'hard' or 'soft', got {self.graph_mode!r}")
        if (self.train_csv is None) != (self.test_csv is None):
            raise ValueError("train_csv and test_csv must be given together")
        if self.stage2_grad_clip is not None and not self.stage2_grad_clip > 0:
            raise ValueError("stage2_grad_clip must be positive or null")

    @property
    def stage1(self):
        if self.stage1_epochs is None:
            return int(round(0.8 * self.total_epochs))
        return self.stage1_epochs

    @property
    def stage2(self):
        return self.total_epochs - self.stage1

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def field_names(cls):
        return [f.name for f in dataclasses.fields(cls)]

    @classmethod
    def from_dict(cls, data):
        unknown = sorted(set(data) - set(cls.field_names()))
        if unknown:
            raise KeyError(f"unknown config key(s) {unknown}; valid keys: {', '.join(cls.field_names())}")
        return cls(**data)

    def replace(self, **changes):
        return self.from_dict({**self.to_dict(), **changes})

    def run_hash(self, seed):
        payload = {k: v for k, v in self.to_dict().items() if k != "seeds"}
        payload["seed"] = seed
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    def mlp(self, seed):
        return MlpConfig(
            input_dim=self.input_dim,
            hidden_dims=tuple(self.hidden_dims),
            feature_dim=self.feature_dim,
            num_classes=self.num_classes,
            init_scale=self.init_scale,
            seed=seed,
        )

    def sgd(self):
        return SgdConfig(
            base_lr=self.base_lr,
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            warmup_epochs=self.warmup_epochs,
            decay_epochs=tuple(self.decay_epochs),
            decay_factor=self.decay_factor,
            batch_size=self.batch_size,
            total_epochs=self.total_epochs,
        )

    def augmentation(self, epoch):
        return AugmentationParams(
            alpha0=self.alpha0,
            beta0=self.beta0,
            epoch=epoch,
            total_epochs=self.total_epochs,
            gamma=self.gamma,
            head_policy=self.head_policy,
            head_k=self.head_k,
            head_min_count=self.head_min_count,
            head_augmentation=self.head_augmentation,
            schedule_mode=self.schedule_mode,
            covariance_only=self.covariance_only,
            renormalize=self.renormalize_graph,
        )

    def long_tail_spec(self, seed):
        return ds.LongTailSpec(
            num_classes=self.num_classes,
            max_count=self.max_count,
            imbalance_factor=self.imbalance_factor,
            input_dim=self.input_dim,
            class_mean_scale=self.class_mean_scale,
            class_cov_scale=self.class_cov_scale,
            test_per_class=self.test_per_class,
            seed=seed if self.data_seed is None else self.data_seed,
        )


def load_config(path):
    return ExperimentConfig.from_dict(json.loads(Path(path).read_text()))


def load_data(config, seed):
    if config.train_csv is not None:
        train = ds.load_csv(config.train_csv)
        test = ds.load_csv(config.test_csv, num_classes=train.num_classes)
        if train.num_classes != config.num_classes or train.dim != config.input_dim:
            raise ValueError(
                f"CSV data has {train.num_classes} classes / dim {train.dim}, "
                f"config says {config.num_classes} / {config.input_dim}"
            )
        return train, test
    return ds.synthesize(config.long_tail_spec(seed))


@dataclass
class MetricsReport:
    overall_error: float
    per_class_error: list
    head_error: float
    tail_error: float
    head_classes: list
    loss_curve: list = field(default_factory=list)
    config_hash: str = ""
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return dataclasses.asdict(self)


def evaluate(state, data, head):
    """Error rates (%) on ``data``: overall, per class, and averaged over head / tail classes."""
    if len(data) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    _, logits = forward(state, data.x)
    pred = logits.argmax(axis=1)
    correct = pred == data.y
    counts = data.class_counts
    per_class = []
    for c in range(data.num_classes):
        if counts[c] == 0:
            per_class.append(float("nan"))
        else:
            per_class.append(100.0 * (1.0 - correct[data.y == c].mean()))
    per_class = np.array(per_class)
    head = np.asarray(head, dtype=bool)
    present = counts > 0

    def group(mask):
        sel = mask & present
        return float(per_class[sel].mean()) if sel.any() else float("nan")

    return MetricsReport(
        overall_error=float(100.0 * (1.0 - correct.mean())),
        per_class_error=[float(v) for v in per_class],
        head_error=group(head),
        tail_error=group(~head),
        head_classes=[int(c) for c in np.flatnonzero(head)],
    )


@dataclass
class Stage1Result:
    state: object
    bank: object
    graph: KnowledgeGraph
    train: ds.Dataset
    test: ds.Dataset
    head: np.ndarray
    curve: list


def _check_finite(value, epoch, stage):
    if not math.isfinite(value):
        raise TrainingDiverged(f"non-finite training loss {value} at epoch {epoch} ({stage})")


def _curve_row(epoch, train_loss, state, test, head):
    m = evaluate(state, test, head)
    return {
        "epoch": epoch,
        "train_loss": train_loss,
        "test_error": m.overall_error,
        "head_error": m.head_error,
        "tail_error": m.tail_error,
    }


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def collect_statistics(state, train, config):
    """Class statistics of the current features and the confusion graph of the current classifier."""
    feats, logits = forward(state, train.x)
    bank = bank_from_features(feats, train.y, train.num_classes, config.batch_size)
    if config.graph_mode == "soft":
        z = logits - logits.max(axis=1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        graph = build_soft_graph(p, train.y, train.num_classes)
    else:
        graph = build_graph(logits.argmax(axis=1), train.y, train.num_classes)
    return bank, graph


def ce_epoch(state, train, epoch, sgd, rng, clip=None):
    losses = []
    for idx in _batches(len(train), sgd.batch_size, rng):
        _, logits, acts = forward(state, train.x[idx], return_cache=True)
        loss, g = cross_entropy(logits, train.y[idx])
        _check_finite(loss, epoch, "CE")
        grads, _ = clip_gradients(backward(state, acts, grad_logits=g), clip)
        sgd_step(state, grads, epoch, sgd)
        losses.append(loss)
    return float(np.mean(losses))


def run_stage1(config, seed, data=None):
    """Plain CE on the original distribution, then statistics and knowledge graph."""
    train, test = load_data(config, seed) if data is None else data
    state = init_state(config.mlp(seed))
    sgd = config.sgd()
    rng = np.random.default_rng([seed, 1])
    head = head_classes(train.class_counts, config.augmentation(0))
    curve = []
    for epoch in range(config.stage1):
        loss = ce_epoch(state, train, epoch, sgd, rng)
        curve.append(_curve_row(epoch, loss, state, test, head))
    bank, graph = collect_statistics(state, train, config)
    return Stage1Result(state, bank, graph, train, test, head, curve)


def _risda_epoch(state, train, epoch, config, sgd, rng, bank, graph, head, weights, trainable):
    params = config.augmentation(epoch + 1)
    aug = build_class_augmentation(graph, bank, params, head, reasoning_on=config.reasoning_on)
    losses = []
    for idx in _batches(len(train), sgd.batch_size, rng):
        f, _, acts = forward(state, train.x[idx], return_cache=True)
        res = risda_loss(f, train.y[idx], state.W, state.b, aug, weights, config.mu_index)
        _check_finite(res.loss, epoch, "surrogate")
        grads = backward(state, acts, grad_features=res.grad_features, grad_W=res.grad_W, grad_b=res.grad_b)
        grads, _ = clip_gradients(grads, config.stage2_grad_clip)
        sgd_step(state, grads, epoch, sgd, trainable)
        losses.append(res.loss)
    return float(np.mean(losses))


def run_stage2(stage1, config, seed):
    """Fine-tune with the surrogate loss (or plain CE) and evaluate on the balanced test set."""
    state = stage1.state.copy()
    if config.reset_momentum:
        state.velocity.clear()
    train, test, head = stage1.train, stage1.test, stage1.head
    bank, graph = stage1.bank, stage1.graph
    sgd = config.sgd()
    rng = np.random.default_rng([seed, 2])
    weights = None
    if config.reweight_on:
        weights = class_weights(train.class_counts, config.gamma, config.normalize_weights)
    trainable = ["W", "b"] if config.freeze_features else None
    curve = list(stage1.curve)

    for k, epoch in enumerate(range(config.stage1, config.total_epochs)):
        if config.loss == "ce":
            loss = ce_epoch(state, train, epoch, sgd, rng, config.stage2_grad_clip)
        else:
            period = config.stats_refresh_period
            if period > 0 and k > 0 and k % period == 0:
                new_bank, graph = collect_statistics(state, train, config)
                bank = ema_refresh(bank, new_bank, config.stats_ema)
            loss = _risda_epoch(state, train, epoch, config, sgd, rng, bank, graph, head, weights, trainable)
        curve.append(_curve_row(epoch, loss, state, test, head))

    report = evaluate(state, test, head)
    report.loss_curve = curve
    report.seed = seed
    report.config_hash = config.run_hash(seed)
    report.meta = {
        "loss": config.loss,
        "mu_index": config.mu_index,
        "schedule_mode": config.schedule_mode,
        "graph_weights": "renormalized" if config.renormalize_graph else "raw",
        "graph_mode": config.graph_mode,
        "reweight_on": config.reweight_on,
        "reasoning_on": config.reasoning_on,
        "alpha0": config.alpha0,
        "beta0": config.beta0,
    }
    return state, report, bank, graph


def run_experiment(config, seed, out=None, stage1=None):
    """One full run; writes ``run-<hash>/`` under ``out`` when given."""
    if stage1 is None:
        stage1 = run_stage1(config, seed)
    state, report, bank, graph = run_stage2(stage1, config, seed)
    log.info("run %s seed=%d error=%.2f tail=%.2f", report.config_hash, seed, report.overall_error, report.tail_error)
    if out is not None:
        write_run(Path(out), config, seed, report, bank, graph)
    return report


def _dump_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_run(out, config, seed, report, bank, graph):
    run_dir = out / f"run-{report.config_hash}"
    run_dir.mkdir(parents=True, exist_ok=True)
    _dump_json({**config.to_dict(), "seeds": [seed]}, run_dir / "config.json")
    _dump_json(report.to_dict(), run_dir / "metrics.json")
    with (run_dir / "loss_curve.csv").open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CURVE_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(report.loss_curve)
    bank.dump(run_dir / "stats_dump.json")
    graph.to_csv(run_dir / "graph.csv")
    return run_dir


def summarize(values):
    arr = np.asarray(values, dtype=np.float64)
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), std


def max_workers():
    return max(1, int(os.environ.get("RISDA_THREADS", "1")))


def _stage2_job(args):
    stage1, config, seed, out = args
    return run_experiment(config, seed, out, stage1)


def _map(jobs):
    workers = max_workers()
    if workers == 1 or len(jobs) <= 1:
        return [_stage2_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_stage2_job, jobs))


def run_variants(config, variants, out=None, seeds=None):
    """Run every ``{name: overrides}`` variant for every seed, sharing one stage-I run per seed.

    The overrides must leave stage I untouched.  Returns ``{name: [reports]}``.
    """
    seeds = config.seeds if seeds is None else seeds
    results = {name: [] for name in variants}
    for seed in seeds:
        stage1 = run_stage1(config, seed)
        names = list(variants)
        jobs = [(stage1, config.replace(**variants[n]), seed, out) for n in names]
        for name, report in zip(names, _map(jobs)):
            results[name].append(report)
    return results


def _write_rows(path, header, rows):
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def train(config, out=None):
    reports = run_variants(config, {"train": {}}, out)["train"]
    if out is not None:
        rows = [[r.seed, r.config_hash, r.overall_error, r.head_error, r.tail_error] for r in reports]
        for metric in ("overall_error", "head_error", "tail_error"):
            mean, std = summarize([getattr(r, metric) for r in reports])
            rows.append([f"mean_{metric}", "", mean, std, ""])
        _write_rows(Path(out) / "summary.csv", ["seed", "run", "overall_error", "head_error", "tail_error"], rows)
    return reports


def ablate(config, out=None):
    """The three ablation rows: full method, without reasoning, without reweighting."""
    results = run_variants(config, ABLATIONS, out)
    if out is not None:
        rows = []
        for name, reports in results.items():
            for r in reports:
                rows.append([name, r.seed, r.config_hash, r.overall_error, r.head_error, r.tail_error])
        _write_rows(
            Path(out) / "summary.csv",
            ["variant", "seed", "run", "overall_error", "head_error", "tail_error"],
            rows,
        )
    return results


@dataclass
class SweepResult:
    alphas: list
    betas: list
    mean_error: np.ndarray
    std_error: np.ndarray
    mean_tail_error: np.ndarray
    reports: dict


def sweep(config, alphas=SENSITIVITY_GRID, betas=SENSITIVITY_GRID, out=None):
    """Full runs for every ``(alpha0, beta0)`` pair and seed; stage I is shared per seed."""
    if not alphas or not betas:
        raise ValueError("sweep grids must be non-empty")
    variants = {(a, b): {"alpha0": a, "beta0": b} for a in alphas for b in betas}
    results = run_variants(config, variants, out)
    shape = (len(alphas), len(betas))
    mean, std, tail = np.zeros(shape), np.zeros(shape), np.zeros(shape)
    rows = []
    for i, a in enumerate(alphas):
        for j, b in enumerate(betas):
            reports = results[(a, b)]
            mean[i, j], std[i, j] = summarize([r.overall_error for r in reports])
            tail[i, j], _ = summarize([r.tail_error for r in reports])
            rows.append([a, b, mean[i, j], std[i, j], tail[i, j], len(reports)])
    if out is not None:
        _write_rows(
            Path(out) / "summary.csv",
            ["alpha0", "beta0", "mean_error", "std_error", "mean_tail_error", "n_seeds"],
            rows,
        )
    return SweepResult(list(alphas), list(betas), mean, std, tail, results)
