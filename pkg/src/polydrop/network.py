"""From-scratch feedforward network: forward, backprop, and training.

The model is a scalar-in scalar-out MLP with ``depth`` hidden layers of
``width`` units (shapes chain 1 -> w -> ... -> w -> 1) and a linear
output.  Dropout is the inverted variant: surviving hidden activations
are rescaled by 1/(1-p) at mask time, so a maskless forward pass needs no
correction.  All randomness (init, shuffling, masks) flows from explicit
seeds, which makes every training run bit-reproducible.
"""

import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .exceptions import TrainingDiverged
from .validation import check_same_length, check_vector

__all__ = [
    "Activation",
    "NetworkConfig",
    "Mlp",
    "TrainConfig",
    "TrainingHistory",
    "sigmoid",
    "relu",
    "init_network",
    "sample_masks",
    "masks_from_seed",
    "forward",
    "forward_with_cache",
    "backward",
    "train",
    "train_arrays",
    "save_checkpoint",
    "load_checkpoint",
]

_CHECKPOINT_TAG = "polydrop-checkpoint-v1"


class Activation(str, Enum):
    RELU = "relu"
    SIGMOID = "sigmoid"


def sigmoid(x):
    """Numerically stable logistic function.

    Splits on the sign of x so the exponential argument is always
    non-positive; safe far beyond |x| = 1e3.
    """
    arr = np.asarray(x, dtype=np.float64)
    out = np.empty_like(arr)
    pos = arr >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-arr[pos]))
    ex = np.exp(arr[~pos])
    out[~pos] = ex / (1.0 + ex)
    if out.ndim == 0:
        return float(out)
    return out


def relu(x):
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def _activate(activation: Activation, z):
    if activation is Activation.RELU:
        return np.maximum(z, 0.0)
    return sigmoid(z)


def _activation_deriv(activation: Activation, z):
    # ReLU subgradient at 0 is taken as 0.
    if activation is Activation.RELU:
        return (z > 0.0).astype(np.float64)
    s = sigmoid(z)
    return s * (1.0 - s)


@dataclass(frozen=True)
class NetworkConfig:
    """Width w, depth d (hidden layers), and ensemble size m, plus the
    activation, dropout rate, and init seed that pin a concrete network."""

    width: int
    depth: int
    ensemble_size: int = 1
    activation: Activation = Activation.RELU
    dropout_rate: float = 0.1
    init_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "activation", Activation(self.activation))
        if self.width < 1:
            raise ValueError(f"width must be >= 1, got {self.width}")
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if self.ensemble_size < 1:
            raise ValueError(f"ensemble_size must be >= 1, got {self.ensemble_size}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(
                f"dropout_rate must lie in [0, 1), got {self.dropout_rate}"
            )


@dataclass
class Mlp:
    """Parameter container; layer i maps fan_in -> fan_out as x @ W_i + b_i."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: Activation
    dropout_rate: float

    @property
    def depth(self) -> int:
        return len(self.weights) - 1

    @property
    def width(self) -> int:
        return self.weights[0].shape[1]

    @property
    def n_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def copy(self) -> "Mlp":
        return Mlp(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            activation=self.activation,
            dropout_rate=self.dropout_rate,
        )

    def parameters(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]


def init_network(config: NetworkConfig) -> Mlp:
    """He-style init for ReLU, Xavier-style for Sigmoid; zero biases."""
    rng = np.random.default_rng(config.init_seed)
    dims = [1] + [config.width] * config.depth + [1]
    gain = 2.0 if config.activation is Activation.RELU else 1.0
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        std = math.sqrt(gain / fan_in)
        weights.append(rng.normal(0.0, std, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Mlp(
        weights=weights,
        biases=biases,
        activation=config.activation,
        dropout_rate=config.dropout_rate,
    )


def sample_masks(rng, batch: int, width: int, depth: int, rate: float):
    """Inverted-dropout masks, one per hidden layer, entries 0 or 1/(1-p)."""
    if rate == 0.0:
        return None
    keep = 1.0 - rate
    scale = 1.0 / keep
    return [
        (rng.random((batch, width)) < keep).astype(np.float64) * scale
        for _ in range(depth)
    ]


def masks_from_seed(seed: int, batch: int, width: int, depth: int, rate: float):
    return sample_masks(np.random.default_rng(seed), batch, width, depth, rate)


def forward_with_cache(mlp: Mlp, x, masks=None):
    """Forward pass keeping pre-activations and layer outputs for backprop.

    Returns (predictions, pre_activations, layer_inputs) where
    layer_inputs[i] is what layer i consumed (post-mask for hidden layers).
    """
    a = np.asarray(x, dtype=np.float64).reshape(-1, 1)
    pre = []
    inputs = [a]
    for i in range(mlp.depth):
        z = a @ mlp.weights[i] + mlp.biases[i]
        h = _activate(mlp.activation, z)
        if masks is not None:
            h = h * masks[i]
        pre.append(z)
        inputs.append(h)
        a = h
    out = a @ mlp.weights[-1] + mlp.biases[-1]
    return out[:, 0], pre, inputs


def forward(mlp: Mlp, x, mask_seed: int | None = None) -> np.ndarray:
    """Batched predictions.

    With ``mask_seed`` None this is the deterministic (maskless) pass;
    otherwise dropout masks are drawn from the seed, which is the
    stochastic pass used both in training and in MC inference.
    """
    x = check_vector(x, "x")
    masks = None
    if mask_seed is not None and mlp.dropout_rate > 0.0:
        masks = masks_from_seed(
            mask_seed, len(x), mlp.width, mlp.depth, mlp.dropout_rate
        )
    out, _, _ = forward_with_cache(mlp, x, masks)
    return out


def backward(mlp: Mlp, x, y, masks=None):
    """Gradients of batch-mean squared error for every parameter.

    Returns (loss, weight_grads, bias_grads); the masks must be the same
    ones the corresponding forward pass used.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y.size == 0:
        raise ValueError("batch must be nonempty")
    out, pre, inputs = forward_with_cache(mlp, x, masks)
    n = y.size
    err = out - y
    loss = float(np.mean(err**2))

    gw = [None] * len(mlp.weights)
    gb = [None] * len(mlp.biases)
    delta = (2.0 / n) * err.reshape(-1, 1)
    gw[-1] = inputs[-1].T @ delta
    gb[-1] = delta.sum(axis=0)

    grad_h = delta @ mlp.weights[-1].T
    for i in range(mlp.depth - 1, -1, -1):
        if masks is not None:
            grad_h = grad_h * masks[i]
        dz = grad_h * _activation_deriv(mlp.activation, pre[i])
        gw[i] = inputs[i].T @ dz
        gb[i] = dz.sum(axis=0)
        if i > 0:
            grad_h = dz @ mlp.weights[i].T
    return loss, gw, gb


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 64
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    early_stop_patience: int | None = 20
    train_seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ValueError(
                f"learning_rate must be positive, got {self.learning_rate}"
            )
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer}")
        if self.early_stop_patience is not None and self.early_stop_patience < 1:
            raise ValueError(
                f"early_stop_patience must be >= 1 or None, got {self.early_stop_patience}"
            )


@dataclass
class TrainingHistory:
    train_loss: list[float] = field(default_factory=list)
    test_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1
    final_epoch: int = -1


class _Sgd:
    def __init__(self, params, lr):
        self.lr = lr

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g


class _Adam:
    def __init__(self, params, lr, beta1, beta2, epsilon):
        self.lr = lr
        self.b1 = beta1
        self.b2 = beta2
        self.eps = epsilon
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        self.t += 1
        bc1 = 1.0 - self.b1**self.t
        bc2 = 1.0 - self.b2**self.t
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.b1 * self.m[i] + (1.0 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1.0 - self.b2) * g * g
            p -= self.lr * (self.m[i] / bc1) / (np.sqrt(self.v[i] / bc2) + self.eps)


def _make_optimizer(cfg: TrainConfig, params):
    if cfg.optimizer == "sgd":
        return _Sgd(params, cfg.learning_rate)
    return _Adam(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon)


def train(mlp: Mlp, dataset, cfg: TrainConfig):
    """Train on a generated dataset's noisy targets; see train_arrays."""
    return train_arrays(
        mlp, dataset.x_train, dataset.y_train, dataset.x_test, dataset.y_test, cfg
    )


def train_arrays(mlp: Mlp, x_train, y_train, x_test, y_test, cfg: TrainConfig):
    """Mini-batch training with per-epoch train/test loss tracking.

    Test loss uses the deterministic (maskless) pass.  When early
    stopping is enabled, the returned network holds the parameters of the
    best-test-loss epoch; otherwise the final parameters.  A non-finite
    loss raises TrainingDiverged with the epoch index rather than
    returning poisoned parameters.
    """
    x_train = check_vector(x_train, "x_train")
    y_train = check_vector(y_train, "y_train")
    x_test = check_vector(x_test, "x_test")
    y_test = check_vector(y_test, "y_test")
    check_same_length(x_train=x_train, y_train=y_train)
    check_same_length(x_test=x_test, y_test=y_test)

    net = mlp.copy()
    params = net.parameters()
    opt = _make_optimizer(cfg, params)
    rng = np.random.default_rng(cfg.train_seed)
    n = len(x_train)

    history = TrainingHistory()
    best_loss = math.inf
    best_params = None

    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        batch_losses = []
        # Divergence shows up as inf/nan values and is handled explicitly,
        # so the overflow warnings on the way there are pure noise.
        with np.errstate(over="ignore", invalid="ignore"):
            for start in range(0, n, cfg.batch_size):
                idx = perm[start : start + cfg.batch_size]
                masks = sample_masks(
                    rng, len(idx), net.width, net.depth, net.dropout_rate
                )
                loss, gw, gb = backward(net, x_train[idx], y_train[idx], masks)
                if not math.isfinite(loss):
                    raise TrainingDiverged(epoch)
                opt.step(params, [*gw, *gb])
                batch_losses.append(loss)

            train_loss = float(np.mean(batch_losses))
            test_pred, _, _ = forward_with_cache(net, x_test)
            test_loss = float(np.mean((test_pred - y_test) ** 2))
        if not (math.isfinite(train_loss) and math.isfinite(test_loss)):
            raise TrainingDiverged(epoch)
        history.train_loss.append(train_loss)
        history.test_loss.append(test_loss)

        if test_loss < best_loss:
            best_loss = test_loss
            history.best_epoch = epoch
            if cfg.early_stop_patience is not None:
                best_params = [p.copy() for p in params]
        history.final_epoch = epoch
        if (
            cfg.early_stop_patience is not None
            and epoch - history.best_epoch >= cfg.early_stop_patience
        ):
            break

    if best_params is not None:
        k = len(net.weights)
        net.weights = best_params[:k]
        net.biases = best_params[k:]
    return net, history


def save_checkpoint(path, mlp: Mlp, meta: dict | None = None) -> None:
    """Persist parameters plus metadata; reload is bit-exact."""
    arrays = {f"w{i}": w for i, w in enumerate(mlp.weights)}
    arrays.update({f"b{i}": b for i, b in enumerate(mlp.biases)})
    np.savez(
        path,
        format=_CHECKPOINT_TAG,
        n_layers=len(mlp.weights),
        activation=mlp.activation.value,
        dropout_rate=mlp.dropout_rate,
        meta=json.dumps(meta or {}, sort_keys=True),
        **arrays,
    )


def load_checkpoint(path):
    """Returns (Mlp, meta dict) for a file written by save_checkpoint."""
    with np.load(path, allow_pickle=False) as data:
        if "format" not in data.files or str(data["format"]) != _CHECKPOINT_TAG:
            raise ValueError(f"{path}: not a recognized checkpoint file")
        n_layers = int(data["n_layers"])
        mlp = Mlp(
            weights=[data[f"w{i}"] for i in range(n_layers)],
            biases=[data[f"b{i}"] for i in range(n_layers)],
            activation=Activation(str(data["activation"])),
            dropout_rate=float(data["dropout_rate"]),
        )
        meta = json.loads(str(data["meta"]))
    return mlp, meta
