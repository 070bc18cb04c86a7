"""A ReLU MLP feature extractor ``F`` with a linear classifier ``H`` on top.

Parameters live in a flat ``dict`` keyed ``F{k}.weight`` / ``F{k}.bias`` for the
extractor layers and ``W`` / ``b`` for the classifier, which keeps SGD,
checkpointing and finite-difference checks uniform.
"""
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class MlpConfig:
    input_dim: int
    hidden_dims: tuple = (64, 64)
    # None with no hidden layers makes F the identity
    feature_dim: int | None = 16
    num_classes: int = 10
    activation: str = "relu"
    init_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")
        dims = [self.input_dim, self.num_classes, *self.hidden_dims]
        if self.feature_dim is not None:
            dims.append(self.feature_dim)
        if min(dims) < 1:
            raise ValueError("all layer widths must be >= 1")

    @property
    def extractor_widths(self):
        widths = list(self.hidden_dims)
        if self.feature_dim is not None:
            widths.append(self.feature_dim)
        return widths

    @property
    def d(self):
        widths = self.extractor_widths
        return widths[-1] if widths else self.input_dim

    def digest(self):
        payload = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]


@dataclass(frozen=True)
class SgdConfig:
    base_lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    warmup_epochs: int = 5
    decay_epochs: tuple = (48, 54)
    decay_factor: float = 0.01
    batch_size: int = 50
    total_epochs: int = 60

    def __post_init__(self):
        object.__setattr__(self, "decay_epochs", tuple(int(e) for e in self.decay_epochs))
        if self.base_lr <= 0:
            raise ValueError("base_lr must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")


@dataclass
class NetworkState:
    config: MlpConfig
    params: dict
    velocity: dict = field(default_factory=dict)

    @property
    def num_layers(self):
        return len(self.config.extractor_widths)

    @property
    def W(self):
        return self.params["W"]

    @property
    def b(self):
        return self.params["b"]

    def copy(self):
        return NetworkState(
            self.config,
            {k: v.copy() for k, v in self.params.items()},
            {k: v.copy() for k, v in self.velocity.items()},
        )


def init_state(config):
    rng = np.random.default_rng(config.seed)
    params = {}
    fan_in = config.input_dim
    for k, width in enumerate(config.extractor_widths):
        bound = config.init_scale * math.sqrt(6.0 / fan_in)
        params[f"F{k}.weight"] = rng.uniform(-bound, bound, (width, fan_in))
        params[f"F{k}.bias"] = np.zeros(width)
        fan_in = width
    bound = config.init_scale * math.sqrt(1.0 / fan_in)
    params["W"] = rng.uniform(-bound, bound, (config.num_classes, fan_in))
    params["b"] = np.zeros(config.num_classes)
    return NetworkState(config, params)


def forward(state, x, return_cache=False):
    """Map inputs to ``(features, logits)``; accepts one vector or a batch of rows."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != state.config.input_dim:
        raise ValueError(f"input of shape {x.shape} does not match input_dim={state.config.input_dim}")

    activations = [X]
    h = X
    for k in range(state.num_layers):
        h = np.maximum(h @ state.params[f"F{k}.weight"].T + state.params[f"F{k}.bias"], 0.0)
        activations.append(h)
    logits = h @ state.W.T + state.b

    if single:
        out = (h[0], logits[0])
    else:
        out = (h, logits)
    return (*out, activations) if return_cache else out


def backward(state, activations, grad_logits=None, grad_features=None, grad_W=None, grad_b=None):
    """Backpropagate loss gradients into every parameter.

    ``grad_logits`` flows through ``logits = f W^T + b``.  The optional
    ``grad_features``, ``grad_W`` and ``grad_b`` are added directly, for losses
    whose value depends on ``f`` or the classifier beyond the plain logits.
    Weight decay is left to :func:`sgd_step`.
    """
    f = activations[-1]
    n = f.shape[0]
    C, d = state.W.shape
    gW = np.zeros((C, d))
    gb = np.zeros(C)
    gf = np.zeros((n, d))
    if grad_logits is not None:
        grad_logits = np.asarray(grad_logits, dtype=np.float64)
        if grad_logits.shape != (n, C):
            raise ValueError(f"grad_logits shape {grad_logits.shape} != {(n, C)}")
        gW += grad_logits.T @ f
        gb += grad_logits.sum(axis=0)
        gf += grad_logits @ state.W
    if grad_features is not None:
        if np.shape(grad_features) != (n, d):
            raise ValueError(f"grad_features shape {np.shape(grad_features)} != {(n, d)}")
        gf += grad_features
    if grad_W is not None:
        gW += grad_W
    if grad_b is not None:
        gb += grad_b

    grads = {"W": gW, "b": gb}
    g = gf
    for k in reversed(range(state.num_layers)):
        out = activations[k + 1]
        g = g * (out > 0)
        grads[f"F{k}.weight"] = g.T @ activations[k]
        grads[f"F{k}.bias"] = g.sum(axis=0)
        g = g @ state.params[f"F{k}.weight"]
    return grads


def learning_rate(epoch, sgd):
    if epoch < sgd.warmup_epochs:
        return sgd.base_lr * (epoch + 1) / sgd.warmup_epochs
    passed = sum(1 for m in sgd.decay_epochs if epoch >= m)
    return sgd.base_lr * sgd.decay_factor**passed


def sgd_step(state, grads, epoch, sgd, trainable=None):
    """Momentum SGD with coupled weight decay, in place; returns ``state``."""
    lr = learning_rate(epoch, sgd)
    names = state.params.keys() if trainable is None else trainable
    for name in names:
        p = state.params[name]
        g = grads[name] + sgd.weight_decay * p
        v = state.velocity.get(name)
        v = g if v is None else sgd.momentum * v + g
        state.velocity[name] = v
        p -= lr * v
    return state


def clip_gradients(grads, max_norm):
    """Rescale ``grads`` so their joint L2 norm is at most ``max_norm``; returns ``(grads, norm)``."""
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm is None or norm <= max_norm:
        return grads, norm
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}, norm


def cross_entropy(logits, labels, weights=None):
    """Mean (optionally per-sample weighted) softmax cross-entropy and its logit gradient."""
    logits = np.asarray(logits, dtype=np.float64)
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    per_sample = lse - shifted[np.arange(n), labels]
    p = np.exp(shifted - lse[:, None])
    p[np.arange(n), labels] -= 1.0
    s = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=np.float64) / n
    return float(s @ per_sample), p * s[:, None]


def save_checkpoint(state, path):
    payload = {
        "version": CHECKPOINT_VERSION,
        "config": asdict(state.config),
        "config_hash": state.config.digest(),
        "params": {k: state.params[k].tolist() for k in sorted(state.params)},
        "velocity": {k: state.velocity[k].tolist() for k in sorted(state.velocity)},
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n")


def load_checkpoint(path):
    payload = json.loads(Path(path).read_text())
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')!r}")
    config = MlpConfig(**payload["config"])
    if config.digest() != payload["config_hash"]:
        raise ValueError("checkpoint config hash mismatch")
    params = {k: np.array(v, dtype=np.float64) for k, v in payload["params"].items()}
    velocity = {k: np.array(v, dtype=np.float64) for k, v in payload["velocity"].items()}
    for k in params:
        params[k] = params[k].reshape(_param_shape(config, k))
    for k in velocity:
        velocity[k] = velocity[k].reshape(_param_shape(config, k))
    return NetworkState(config, params, velocity)


def _param_shape(config, name):
    widths = [config.input_dim, *config.extractor_widths]
    if name == "W":
        return (config.num_classes, config.d)
    if name == "b":
        return (config.num_classes,)
    k = int(name[1:].split(".")[0])
    return (widths[k + 1], widths[k]) if name.endswith("weight") else (widths[k + 1],)
