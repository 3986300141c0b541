"""Dense feed-forward networks trained by backpropagation, written on numpy.

A network is a plain :class:`DenseNetwork` value; the functions here
(:func:`forward`, :func:`loss`, :func:`backprop_gradients`, :func:`train`)
never mutate their inputs. The classifier head emits ``(p_e, p_n)``; the
regressor head emits an unconstrained pair (used as ``(cos, sin)``).
"""

from __future__ import annotations

import copy
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ACTIVATIONS = ("relu", "tanh", "linear", "softmax")
HEADS = ("classifier", "regressor")


class TrainingError(FloatingPointError):
    """Raised when the training loss stops being finite."""


@dataclass(frozen=True)
class LayerSpec:
    fan_in: int
    fan_out: int
    activation: str

    def __post_init__(self):
        if self.fan_in < 1 or self.fan_out < 1:
            raise ValueError(f"layer dimensions must be >= 1, got {self.fan_in}x{self.fan_out}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class Layer:
    weight: np.ndarray  # (fan_out, fan_in)
    bias: np.ndarray  # (fan_out,)
    activation: str

    @property
    def spec(self) -> LayerSpec:
        fan_out, fan_in = self.weight.shape
        return LayerSpec(fan_in, fan_out, self.activation)


@dataclass
class DenseNetwork:
    layers: list[Layer]
    head: str

    def __post_init__(self):
        if self.head not in HEADS:
            raise ValueError(f"unknown head {self.head!r}")
        if not self.layers:
            raise ValueError("network needs at least one layer")
        for k, layer in enumerate(self.layers):
            layer.weight = np.asarray(layer.weight, dtype=float)
            layer.bias = np.asarray(layer.bias, dtype=float)
            spec = layer.spec
            if layer.bias.shape != (spec.fan_out,):
                raise ValueError(f"layer {k}: bias shape {layer.bias.shape} != ({spec.fan_out},)")
            if k > 0 and self.layers[k - 1].spec.fan_out != spec.fan_in:
                raise ValueError(f"layer {k}: fan_in {spec.fan_in} does not chain "
                                 f"with previous fan_out {self.layers[k - 1].spec.fan_out}")
            if spec.activation == "softmax" and k != len(self.layers) - 1:
                raise ValueError("softmax is only allowed on the final layer")
        last = self.layers[-1].spec
        if last.fan_out != 2:
            raise ValueError(f"{self.head} head must have width 2, got {last.fan_out}")
        if self.head == "classifier" and last.activation != "softmax":
            raise ValueError("classifier head must end in softmax")
        if self.head == "regressor" and last.activation != "linear":
            raise ValueError("regressor head must end linear")

    @property
    def n_inputs(self) -> int:
        return self.layers[0].spec.fan_in

    @property
    def specs(self) -> list[LayerSpec]:
        return [layer.spec for layer in self.layers]

    def copy(self) -> DenseNetwork:
        return copy.deepcopy(self)

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend((layer.weight, layer.bias))
        return out


def build_network(sizes, activations, head: str, seed: int = 0) -> DenseNetwork:
    """Fresh network with ``len(sizes) - 1`` layers.

    Weights are drawn uniformly from ``[-a, a]`` with ``a = sqrt(6 / fan_in)``
    for relu layers and ``sqrt(3 / fan_in)`` otherwise; biases start at zero.
    """
    if len(activations) != len(sizes) - 1:
        raise ValueError("need one activation per layer")
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out, act in zip(sizes[:-1], sizes[1:], activations):
        LayerSpec(fan_in, fan_out, act)
        limit = np.sqrt((6.0 if act == "relu" else 3.0) / fan_in)
        layers.append(Layer(rng.uniform(-limit, limit, size=(fan_out, fan_in)),
                            np.zeros(fan_out), act))
    return DenseNetwork(layers, head)


def classifier_network(n_inputs: int, hidden=(32, 16), seed: int = 0) -> DenseNetwork:
    sizes = (n_inputs, *hidden, 2)
    return build_network(sizes, ["relu"] * len(hidden) + ["softmax"], "classifier", seed)


def regressor_network(n_inputs: int, hidden=(64, 32), seed: int = 0) -> DenseNetwork:
    sizes = (n_inputs, *hidden, 2)
    return build_network(sizes, ["tanh"] * len(hidden) + ["linear"], "regressor", seed)


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return np.maximum(z, 0.0)
    if activation == "tanh":
        return np.tanh(z)
    if activation == "softmax":
        e = np.exp(z - z.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)
    return z


def _as_batch(net: DenseNetwork, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.ndim != 2 or x.shape[1] != net.n_inputs:
        raise ValueError(f"expected input width {net.n_inputs}, got shape {np.shape(x)}")
    return x, single


def _forward_cache(net: DenseNetwork, x: np.ndarray):
    activations = [x]
    pre = []
    a = x
    for layer in net.layers:
        z = a @ layer.weight.T + layer.bias
        a = _activate(z, layer.activation)
        pre.append(z)
        activations.append(a)
    return pre, activations


def forward(net: DenseNetwork, x) -> np.ndarray:
    """Propagate one input vector (or a batch of rows) through ``net``."""
    x, single = _as_batch(net, x)
    out = _forward_cache(net, x)[1][-1]
    if net.head == "classifier":
        # p_n is defined as the complement of p_e
        out = out.copy()
        out[:, 1] = 1.0 - out[:, 0]
    return out[0] if single else out


def predict_batch(net: DenseNetwork, inputs, return_latency: bool = False):
    """Vectorized :func:`forward`; optionally also the mean per-window latency (s)."""
    start = time.perf_counter()
    out = forward(net, np.atleast_2d(np.asarray(inputs, dtype=float)))
    elapsed = time.perf_counter() - start
    if return_latency:
        return out, elapsed / max(len(out), 1)
    return out


def per_window_latency(net: DenseNetwork, inputs) -> np.ndarray:
    """Wall time (s) of a single-window forward pass for every row of ``inputs``."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    times = np.empty(len(inputs))
    for k, row in enumerate(inputs):
        start = time.perf_counter()
        forward(net, row)
        times[k] = time.perf_counter() - start
    return times


def one_hot_labels(y) -> np.ndarray:
    """Echo/noise labels (1/0) as targets ordered like the network output ``(p_e, p_n)``."""
    y = np.asarray(y).ravel()
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 (noise) or 1 (echo)")
    return np.column_stack([y == 1, y == 0]).astype(float)


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def _check_batch(net, x, targets):
    x, _ = _as_batch(net, x)
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if len(x) == 0:
        raise ValueError("batch must not be empty")
    if targets.shape != (len(x), 2):
        raise ValueError(f"targets must have shape ({len(x)}, 2), got {targets.shape}")
    return x, targets


def loss(net: DenseNetwork, x, targets) -> float:
    """Mean cross-entropy (classifier) or mean squared error (regressor)."""
    x, targets = _check_batch(net, x, targets)
    pre, acts = _forward_cache(net, x)
    if net.head == "classifier":
        return float(-np.mean(np.sum(targets * _log_softmax(pre[-1]), axis=1)))
    return float(np.mean((acts[-1] - targets) ** 2))


def backprop_gradients(net: DenseNetwork, x, targets) -> list[tuple[np.ndarray, np.ndarray]]:
    """Gradient of :func:`loss` as ``[(dW, db), ...]`` per layer."""
    x, targets = _check_batch(net, x, targets)
    n = len(x)
    pre, acts = _forward_cache(net, x)
    if net.head == "classifier":
        delta = (acts[-1] - targets) / n
    else:
        delta = 2.0 * (acts[-1] - targets) / targets.size
    grads = []
    for k in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[k]
        grads.append((delta.T @ acts[k], delta.sum(axis=0)))
        if k == 0:
            break
        delta = delta @ layer.weight
        below = net.layers[k - 1].activation
        if below == "relu":
            delta = delta * (pre[k - 1] > 0)
        elif below == "tanh":
            delta = delta * (1.0 - acts[k] ** 2)
    return grads[::-1]


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    validation_fraction: float = 0.2

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        # 0 disables the split and scores on the training data (tiny toy sets)
        if not 0 <= self.validation_fraction < 1:
            raise ValueError("validation_fraction must lie in [0, 1)")


@dataclass
class TrainReport:
    final_test_loss: float
    accuracy: float | None
    loss_history: list[float] = field(default_factory=list)
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return {"final_test_loss": self.final_test_loss, "accuracy": self.accuracy,
                "loss_history": list(self.loss_history), "wall_time": self.wall_time}


def split_indices(n: int, validation_fraction: float, seed: int):
    """Reproducible train/validation index split."""
    order = np.random.default_rng(seed).permutation(n)
    n_val = int(round(validation_fraction * n))
    if validation_fraction > 0:
        n_val = min(max(n_val, 1), n - 1)
    return np.sort(order[n_val:]), np.sort(order[:n_val])


def _accuracy(net, x, targets) -> float:
    pred = forward(net, x)
    return float(np.mean(np.argmax(pred, axis=1) == np.argmax(targets, axis=1)))


def train(net: DenseNetwork, x, targets, cfg: TrainConfig) -> tuple[DenseNetwork, TrainReport]:
    """Minibatch training of a copy of ``net``; deterministic for a given ``cfg.seed``."""
    start = time.perf_counter()
    x, targets = _check_batch(net, x, targets)
    train_idx, val_idx = split_indices(len(x), cfg.validation_fraction, cfg.seed)
    if len(val_idx) == 0:
        val_idx = train_idx
    xt, yt = x[train_idx], targets[train_idx]

    net = net.copy()
    params = net.parameters()
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    rng = np.random.default_rng(cfg.seed + 1)
    step = 0
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(xt))
        for lo in range(0, len(order), cfg.batch_size):
            batch = order[lo:lo + cfg.batch_size]
            grads = [g for pair in backprop_gradients(net, xt[batch], yt[batch]) for g in pair]
            step += 1
            for p, g, mk, vk in zip(params, grads, m, v):
                if cfg.optimizer == "sgd":
                    p -= cfg.learning_rate * g
                    continue
                mk *= cfg.beta1
                mk += (1 - cfg.beta1) * g
                vk *= cfg.beta2
                vk += (1 - cfg.beta2) * g * g
                m_hat = mk / (1 - cfg.beta1 ** step)
                v_hat = vk / (1 - cfg.beta2 ** step)
                p -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
        epoch_loss = loss(net, xt, yt)
        if not np.isfinite(epoch_loss):
            raise TrainingError(f"training loss became {epoch_loss} at epoch {epoch} "
                                f"(learning_rate={cfg.learning_rate}); lower the rate "
                                f"or check the inputs for non-finite values")
        history.append(epoch_loss)

    test_loss = loss(net, x[val_idx], targets[val_idx])
    acc = _accuracy(net, x[val_idx], targets[val_idx]) if net.head == "classifier" else None
    report = TrainReport(test_loss, acc, history, time.perf_counter() - start)
    return net, report


def network_to_dict(net: DenseNetwork) -> dict:
    return {
        "head": net.head,
        "layers": [
            {
                "fan_in": layer.spec.fan_in,
                "fan_out": layer.spec.fan_out,
                "activation": layer.activation,
                "weight_shape": list(layer.weight.shape),
                "weight": layer.weight.ravel(order="C").tolist(),
                "bias": layer.bias.tolist(),
            }
            for layer in net.layers
        ],
    }


def network_from_dict(data: dict) -> DenseNetwork:
    layers = []
    for entry in data["layers"]:
        shape = tuple(entry["weight_shape"])
        if shape != (entry["fan_out"], entry["fan_in"]):
            raise ValueError(f"weight shape {shape} disagrees with layer spec")
        weight = np.asarray(entry["weight"], dtype=float).reshape(shape, order="C")
        layers.append(Layer(weight, np.asarray(entry["bias"], dtype=float), entry["activation"]))
    return DenseNetwork(layers, data["head"])


def save_network(net: DenseNetwork, path) -> None:
    # json writes floats with repr, which round-trips float64 exactly
    Path(path).write_text(json.dumps(network_to_dict(net), indent=1) + "\n")


def load_network(path) -> DenseNetwork:
    return network_from_dict(json.loads(Path(path).read_text()))
