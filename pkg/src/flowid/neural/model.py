"""Network assembly, training, and layer freezing.

Three fixed architectures are provided, all consuming the 19 flow
features. The fully connected stack takes them as a flat vector; the
LSTM and Conv1D stacks reshape them into a length-19 sequence with one
channel per step:

  fc:     dense 32, 64, 128, 256, output
  lstm:   lstm 200, 100, 50, 25, dropout 0.2, output
  conv1d: conv(64,3), conv(64,3), dropout 0.2, maxpool(2), flatten,
          dense 100, output

The multiclass head is a linear layer over the class count trained with
softmax + categorical cross-entropy; the binary head is a single unit
trained with sigmoid + binary cross-entropy. Training runs mini-batch
Adam (lr 1e-3, beta1 0.9, beta2 0.999, eps 1e-8) for 5 epochs with
batch size 128 by default, and is fully determined by the seeds.

Inputs are standardized per feature with statistics fitted once on the
first training window a model sees; an update pass (retraining) keeps
the original scaler so frozen layers keep seeing the input scale they
were trained on. Zero-variance features pass through as 0.
"""

import copy
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..seeds import mix
from .layers import Conv1D, Dense, Dropout, Flatten, LSTM, MaxPool1D, sigmoid, softmax

INPUT_DIM = 19

ARCH_NAMES = ("fc", "lstm", "conv1d")

MULTICLASS = "multiclass"
BINARY = "binary"


class TrainingError(RuntimeError):
    """Raised when training cannot proceed (empty data, divergence)."""


@dataclass(frozen=True)
class LayerSpec:
    kind: str  # dense | lstm | conv1d | dropout | maxpool1d | flatten | output
    units: int = 0
    filters: int = 0
    kernel: int = 0
    rate: float = 0.0
    pool: int = 0
    activation: str = ""

    def to_dict(self):
        return {k: v for k, v in self.__dict__.items()}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def arch_specs(arch: str) -> list:
    """Hidden-layer specs for one of the three architecture names."""
    if arch == "fc":
        return [LayerSpec("dense", units=u, activation="relu") for u in (32, 64, 128, 256)]
    if arch == "lstm":
        return ([LayerSpec("lstm", units=u) for u in (200, 100, 50, 25)]
                + [LayerSpec("dropout", rate=0.2)])
    if arch == "conv1d":
        return [
            LayerSpec("conv1d", filters=64, kernel=3),
            LayerSpec("conv1d", filters=64, kernel=3),
            LayerSpec("dropout", rate=0.2),
            LayerSpec("maxpool1d", pool=2),
            LayerSpec("flatten"),
            LayerSpec("dense", units=100, activation="relu"),
        ]
    raise ValueError(f"unknown architecture: {arch!r}")


def _build_layer(spec: LayerSpec, is_last_recurrent: bool):
    if spec.kind == "dense" or spec.kind == "output":
        return Dense(spec.units, activation=spec.activation or "linear")
    if spec.kind == "lstm":
        return LSTM(spec.units, return_sequences=not is_last_recurrent)
    if spec.kind == "conv1d":
        return Conv1D(spec.filters, spec.kernel)
    if spec.kind == "dropout":
        return Dropout(spec.rate)
    if spec.kind == "maxpool1d":
        return MaxPool1D(spec.pool)
    if spec.kind == "flatten":
        return Flatten()
    raise ValueError(f"unknown layer kind: {spec.kind!r}")


@dataclass
class Scaler:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X) -> "Scaler":
        X = np.asarray(X, dtype=np.float64)
        return cls(mean=X.mean(axis=0), std=X.std(axis=0))

    def transform(self, X) -> np.ndarray:
        safe = np.where(self.std == 0.0, 1.0, self.std)
        return (np.asarray(X, dtype=np.float64) - self.mean) / safe


@dataclass
class TrainConfig:
    epochs: int = 5
    batch_size: int = 128
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0


class NeuralNet:
    """An ordered layer stack with a freeze mask over its weighted layers."""

    def __init__(self, arch: str, head: str, n_classes: int, seed: int,
                 dtype=np.float32, input_dim: int = INPUT_DIM):
        if head not in (MULTICLASS, BINARY):
            raise ValueError(f"unknown head: {head!r}")
        self.arch = arch
        self.head = head
        self.n_classes = n_classes if head == MULTICLASS else 1
        self.seed = seed
        self.dtype = np.dtype(dtype)
        self.input_dim = input_dim
        self.sequence_input = arch in ("lstm", "conv1d")
        self.scaler: Optional[Scaler] = None

        self.specs = arch_specs(arch) + [LayerSpec("output", units=self.n_classes, activation="linear")]
        last_lstm = max((i for i, s in enumerate(self.specs) if s.kind == "lstm"), default=-1)
        self.layers = [_build_layer(s, is_last_recurrent=(i == last_lstm))
                       for i, s in enumerate(self.specs)]

        rng = np.random.Generator(np.random.PCG64(mix(seed, "init", arch, head)))
        shape = (input_dim, 1) if self.sequence_input else (input_dim,)
        for layer in self.layers:
            shape = layer.init(rng, shape, self.dtype)
        self.freeze_mask = [False] * len(self.weighted_layers())

    # ---- structure -------------------------------------------------

    def weighted_layers(self) -> list:
        """(stack index, layer) for layers that hold parameters."""
        return [(i, l) for i, l in enumerate(self.layers) if l.params]

    def param_count(self) -> int:
        return sum(l.param_count() for _, l in self.weighted_layers())

    def trainable_param_count(self) -> int:
        return sum(l.param_count() for frozen, (_, l)
                   in zip(self.freeze_mask, self.weighted_layers()) if not frozen)

    def tensors(self) -> dict:
        """(stack index, name) -> parameter array, in forward order."""
        return {(i, name): p for i, l in self.weighted_layers() for name, p in l.params.items()}

    def clone(self) -> "NeuralNet":
        return copy.deepcopy(self)

    # ---- forward / loss --------------------------------------------

    def _prepare(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.input_dim:
            raise ValueError(f"expected {self.input_dim} features, got {X.shape[1]}")
        if self.scaler is not None:
            X = self.scaler.transform(X)
        X = X.astype(self.dtype)
        if self.sequence_input:
            X = X[:, :, None]
        return X

    def _logits(self, X, training=False, rng=None) -> np.ndarray:
        out = self._prepare(X)
        for layer in self.layers:
            out = layer.forward(out, training=training, rng=rng)
        return out

    def forward(self, X, training=False, rng=None) -> np.ndarray:
        """Head output: class probabilities (multiclass) or P(positive)."""
        logits = self._logits(X, training=training, rng=rng)
        if self.head == MULTICLASS:
            return softmax(logits)
        return sigmoid(logits[:, 0])

    def predict_proba(self, X, batch_size: int = 1024) -> np.ndarray:
        """Inference-mode forward in bounded-memory chunks."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        outs = [self.forward(X[i:i + batch_size]) for i in range(0, len(X), batch_size)]
        return np.concatenate(outs, axis=0)

    def predict(self, X) -> np.ndarray:
        proba = self.predict_proba(X)
        if self.head == BINARY:
            return (proba >= 0.5).astype(np.int64)
        return np.argmax(proba, axis=1)

    def _loss_from_logits(self, logits, y):
        n = logits.shape[0]
        z = logits.astype(np.float64)
        if self.head == MULTICLASS:
            zmax = z.max(axis=1, keepdims=True)
            logsum = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
            loss = float(np.mean(logsum - z[np.arange(n), y]))
            dlogits = softmax(z)
            dlogits[np.arange(n), y] -= 1.0
        else:
            zf = z[:, 0]
            yf = y.astype(np.float64)
            # log(1 + exp(-|z|)) formulation keeps the loss finite
            loss = float(np.mean(np.maximum(zf, 0) - zf * yf + np.log1p(np.exp(-np.abs(zf)))))
            dlogits = (sigmoid(zf) - yf)[:, None]
        return loss, (dlogits / n).astype(self.dtype)

    def loss(self, X, y, rng=None, training=True) -> float:
        y = np.asarray(y, dtype=np.int64)
        logits = self._logits(X, training=training, rng=rng)
        return self._loss_from_logits(logits, y)[0]

    def loss_and_grads(self, X, y, rng=None):
        """Mean loss and gradients for every non-frozen tensor.

        Frozen layers get no gradient entry, and backpropagation stops
        at the deepest non-frozen weighted layer.
        """
        y = np.asarray(y, dtype=np.int64)
        logits = self._logits(X, training=True, rng=rng)
        loss, dy = self._loss_from_logits(logits, y)

        weighted = self.weighted_layers()
        trainable_stack_idx = [i for frozen, (i, _) in zip(self.freeze_mask, weighted) if not frozen]
        if not trainable_stack_idx:
            return loss, {}
        deepest = min(trainable_stack_idx)

        grads = {}
        for li in range(len(self.layers) - 1, deepest - 1, -1):
            layer = self.layers[li]
            dy = layer.backward(dy, need_dx=(li > deepest))
            if layer.params and li in trainable_stack_idx:
                for name, g in layer.grads.items():
                    grads[(li, name)] = g
        return loss, grads


def init_model(arch: str, head: str, n_classes: int = None, seed: int = 0,
               dtype=np.float32, input_dim: int = INPUT_DIM) -> NeuralNet:
    """Build and initialize one of the three architectures.

    Weights are fully determined by (arch, head, seed); the freeze mask
    starts all-false.
    """
    if arch not in ARCH_NAMES:
        raise ValueError(f"unknown architecture: {arch!r} (choose from {ARCH_NAMES})")
    if head == MULTICLASS and (n_classes is None or n_classes < 2):
        raise ValueError("multiclass head needs n_classes >= 2")
    return NeuralNet(arch, head, n_classes if head == MULTICLASS else 1,
                     seed, dtype=dtype, input_dim=input_dim)


def freeze(model: NeuralNet, k: int) -> NeuralNet:
    """Freeze the first k weighted layers (forward order); k=0 clears.

    Layers without parameters (dropout, pooling, flatten) do not count.
    The output layer always stays trainable.
    """
    n_freezable = len(model.freeze_mask) - 1
    if not 0 <= k <= n_freezable:
        raise ValueError(f"freeze count {k} outside [0, {n_freezable}]")
    model.freeze_mask = [i < k for i in range(len(model.freeze_mask))]
    return model


def train(model: NeuralNet, X, y, cfg: TrainConfig = None) -> NeuralNet:
    """Mini-batch Adam over seeded-shuffled epochs; updates in place.

    Frozen tensors are left bit-identical; their optimizer state (if
    any) is retained but never advanced. Raises TrainingError on empty
    data or a non-finite loss.
    """
    cfg = cfg or TrainConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if len(X) == 0:
        raise TrainingError("empty training set")
    if model.scaler is None:
        model.scaler = Scaler.fit(X)

    state = {}  # tensor key -> [m, v, t]
    shuffle_rng = np.random.Generator(np.random.PCG64(mix(cfg.seed, "shuffle")))
    tensors = model.tensors()
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(len(X))
        for start in range(0, len(X), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            rng = np.random.Generator(np.random.PCG64(mix(cfg.seed, "dropout", epoch, start)))
            loss, grads = model.loss_and_grads(X[idx], y[idx], rng=rng)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}: {loss}")
            for key, g in grads.items():
                m, v, t = state.setdefault(key, [np.zeros_like(g), np.zeros_like(g), 0])
                t += 1
                m = cfg.beta1 * m + (1 - cfg.beta1) * g
                v = cfg.beta2 * v + (1 - cfg.beta2) * (g * g)
                state[key] = [m, v, t]
                m_hat = m / (1 - cfg.beta1 ** t)
                v_hat = v / (1 - cfg.beta2 ** t)
                tensors[key] -= (cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)).astype(model.dtype)
    return model
