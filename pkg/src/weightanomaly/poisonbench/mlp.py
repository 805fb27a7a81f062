"""Tiny ReLU MLP classifier trained with weighted cross-entropy and Adam."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..weightstore import NetworkRecord, WeightTensor
from .dataset import LabeledImages
from .poison import PoisonSpec, apply_trigger

Params = list[np.ndarray]  # [W1, b1, W2, b2, ...], W shaped (out, in)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    hidden_dims: tuple[int, ...] = (64,)
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-3
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    class_weights: Mapping[int, float] = field(default_factory=dict)
    split_ratio: float = 0.7
    seed: int = 0
    # Parameter initialization seed; defaults to ``seed``. Setting it to a
    # shared value gives every run the same starting weights, like
    # fine-tuning from one pretrained checkpoint.
    init_seed: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        object.__setattr__(self, "adam_betas", tuple(float(b) for b in self.adam_betas))
        object.__setattr__(self, "class_weights", {int(k): float(v) for k, v in dict(self.class_weights).items()})
        if any(h < 1 for h in self.hidden_dims):
            raise ValueError("hidden_dims must be positive")
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("epochs, batch_size and learning_rate must be positive")
        if not all(0.0 <= b < 1.0 for b in self.adam_betas) or len(self.adam_betas) != 2:
            raise ValueError("adam_betas must be two values in [0, 1)")
        if any(w <= 0 for w in self.class_weights.values()):
            raise ValueError("class weights must be positive")
        if not 0.0 < self.split_ratio < 1.0:
            raise ValueError("split_ratio must be in (0, 1)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_dims"] = list(self.hidden_dims)
        d["adam_betas"] = list(self.adam_betas)
        d["class_weights"] = {str(k): v for k, v in sorted(self.class_weights.items())}
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrainConfig":
        d = dict(d)
        if "class_weights" in d:
            d["class_weights"] = {int(k): float(v) for k, v in d["class_weights"].items()}
        if "hidden_dims" in d:
            d["hidden_dims"] = tuple(d["hidden_dims"])
        if "adam_betas" in d:
            d["adam_betas"] = tuple(d["adam_betas"])
        return cls(**d)


def init_params(sizes: Sequence[int], rng: np.random.Generator) -> Params:
    """Uniform fan-in init, ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))`` for weights and biases."""
    params: Params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        params.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        params.append(rng.uniform(-bound, bound, size=fan_out))
    return params


def forward(params: Params, X: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Logits and the per-layer inputs needed for backprop."""
    acts = [X]
    h = X
    n_layers = len(params) // 2
    for i in range(n_layers):
        W, b = params[2 * i], params[2 * i + 1]
        h = h @ W.T + b
        if i < n_layers - 1:
            h = np.maximum(h, 0.0)
            acts.append(h)
    return h, acts


def sample_weights(y: np.ndarray, class_weights: Mapping[int, float]) -> np.ndarray:
    return np.array([class_weights.get(int(k), 1.0) for k in y])


def loss_and_grads(
    params: Params,
    X: np.ndarray,
    y: np.ndarray,
    class_weights: Mapping[int, float] | None = None,
) -> tuple[float, Params]:
    """Batch loss ``mean_i w[y_i] * CE_i`` and its exact gradient."""
    logits, acts = forward(params, X)
    n = X.shape[0]
    w = sample_weights(y, class_weights or {})
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    log_p = shifted - log_z[:, None]
    loss = float(np.mean(-w * log_p[np.arange(n), y]))

    delta = np.exp(log_p)
    delta[np.arange(n), y] -= 1.0
    delta *= (w / n)[:, None]
    grads: Params = [np.empty(0)] * len(params)
    n_layers = len(params) // 2
    for i in reversed(range(n_layers)):
        a = acts[i]
        grads[2 * i] = delta.T @ a
        grads[2 * i + 1] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params[2 * i]) * (a > 0)
    return loss, grads


class Adam:
    def __init__(self, params: Params, lr: float, betas: tuple[float, float], eps: float) -> None:
        self.lr, (self.b1, self.b2), self.eps = lr, betas, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: Params, grads: Params) -> None:
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class TrainResult:
    params: Params
    epoch_losses: list[float]


def fit_mlp(train: LabeledImages, config: TrainConfig, n_classes: int | None = None) -> TrainResult:
    """Run the training loop; fully determined by ``config``."""
    if len(train) == 0:
        raise TrainingError("empty training set")
    X = train.flat()
    y = train.labels.astype(np.int64)
    n_classes = int(n_classes if n_classes is not None else y.max() + 1)
    init_rng = np.random.default_rng([config.seed if config.init_seed is None else config.init_seed, 0])
    shuffle_rng = np.random.default_rng([config.seed, 1])
    params = init_params([X.shape[1], *config.hidden_dims, n_classes], init_rng)
    opt = Adam(params, config.learning_rate, config.adam_betas, config.adam_eps)

    epoch_losses = []
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(len(y))
        total = 0.0
        for start in range(0, len(y), config.batch_size):
            idx = order[start : start + config.batch_size]
            with np.errstate(over="ignore", invalid="ignore"):
                loss, grads = loss_and_grads(params, X[idx], y[idx], config.class_weights)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
                raise TrainingError(f"non-finite loss at epoch {epoch} (seed={config.seed})")
            opt.step(params, grads)
            total += loss * idx.size
        epoch_losses.append(total / len(y))
    return TrainResult(params, epoch_losses)


def layer_names(n_layers: int) -> list[str]:
    return [f"fc{i + 1}" for i in range(n_layers)]


def params_to_tensors(params: Params) -> list[WeightTensor]:
    tensors = []
    for name, i in zip(layer_names(len(params) // 2), range(0, len(params), 2)):
        tensors.append(WeightTensor(name, params[i]))
        tensors.append(WeightTensor(f"{name}.bias", params[i + 1]))
    return tensors


def params_from_record(record: NetworkRecord) -> Params:
    by_name = {t.name: t for t in record.tensors}
    params: Params = []
    i = 1
    while f"fc{i}" in by_name:
        params.append(by_name[f"fc{i}"].as_f64())
        params.append(by_name[f"fc{i}.bias"].as_f64())
        i += 1
    if not params:
        raise ValueError(f"record {record.network_id!r} holds no fc layers")
    return params


def predict(params: Params | NetworkRecord, images: np.ndarray) -> np.ndarray:
    if isinstance(params, NetworkRecord):
        params = params_from_record(params)
    X = np.asarray(images, dtype=np.float64).reshape(len(images), -1)
    logits, _ = forward(params, X)
    return logits.argmax(axis=1)


def accuracy(params: Params | NetworkRecord, data: LabeledImages) -> float:
    return float(np.mean(predict(params, data.images) == data.labels))


def train_network(
    train: LabeledImages,
    config: TrainConfig,
    test: LabeledImages | None = None,
    network_id: str = "net",
    label: str = "clean",
    metadata: Mapping[str, str] | None = None,
    n_classes: int | None = None,
) -> NetworkRecord:
    """Train an MLP and package its weights as a record.

    Weight matrices are stored as ``fc1..fcK`` with shape ``(out, in)``;
    biases as ``fcK.bias``.
    """
    result = fit_mlp(train, config, n_classes)
    meta = {
        "seed": str(config.seed),
        "train_accuracy": repr(accuracy(result.params, train)),
        "final_loss": repr(result.epoch_losses[-1]),
    }
    if test is not None:
        meta["test_accuracy"] = repr(accuracy(result.params, test))
    meta.update(metadata or {})
    return NetworkRecord(network_id, label, tuple(params_to_tensors(result.params)), meta)


def attack_success_rate(record: NetworkRecord | Params, test: LabeledImages, spec: PoisonSpec) -> float:
    """Fraction of triggered impostor test images classified as the victim."""
    imp = test.of_class(spec.impostor)
    if len(imp) == 0:
        raise ValueError(f"impostor class {spec.impostor} absent from the test set")
    pred = predict(record, apply_trigger(imp.images, spec.trigger))
    return float(np.mean(pred == spec.victim))
