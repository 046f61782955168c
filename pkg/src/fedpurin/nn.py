"""Dense feed-forward classifier over a flat parameter vector.

The whole network lives in a single float64 vector: each dense layer owns one
contiguous segment holding its weight matrix (row-major, input x output)
followed by its bias. Flat addressing is what the masking and aggregation
stages operate on, so the layout is part of the model's public contract.

Training is plain mini-batch SGD on mean-reduced softmax cross-entropy.
``local_train`` is a pure function of (initial parameters, shard, seed);
callers may evaluate clients in any order or in parallel without changing
results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError
from .rng import SplitMix64

HIDDEN_ACTIVATIONS = ("relu", "identity")
FINAL_ACTIVATIONS = ("identity", "softmax_ce")


@dataclass(frozen=True)
class LayerSpec:
    """One dense layer: y = activation(x @ W + b)."""

    input_dim: int
    output_dim: int
    activation: str = "relu"


@dataclass(frozen=True)
class LayerSlot:
    """Flat-vector segment owned by one layer (weights then bias)."""

    layer_id: int
    offset: int
    length: int


@dataclass(frozen=True, eq=False)
class GradientSnapshot:
    """Gradient information captured at the end of local training.

    ``exact_grad`` is the batch-averaged gradient of the final training batch,
    evaluated at the post-update parameters. ``delta_theta`` is the total
    parameter movement over the local training pass.
    """

    exact_grad: np.ndarray
    delta_theta: np.ndarray

    def __post_init__(self) -> None:
        if self.exact_grad.shape != self.delta_theta.shape:
            raise ConfigError("snapshot arrays must have identical shape")
        if not (np.all(np.isfinite(self.exact_grad)) and np.all(np.isfinite(self.delta_theta))):
            raise NumericError("snapshot contains non-finite entries")


class Mlp:
    """Architecture plus flat-parameter addressing; holds no parameter state."""

    def __init__(self, layers: list[LayerSpec]) -> None:
        if not layers:
            raise ConfigError("model needs at least one layer")
        for i, spec in enumerate(layers):
            if spec.input_dim < 1 or spec.output_dim < 1:
                raise ConfigError(f"layer {i}: dimensions must be positive")
            final = i == len(layers) - 1
            allowed = FINAL_ACTIVATIONS if final else HIDDEN_ACTIVATIONS
            if spec.activation not in allowed:
                raise ConfigError(f"layer {i}: unsupported activation {spec.activation!r}")
            if i > 0 and layers[i - 1].output_dim != spec.input_dim:
                raise ConfigError(
                    f"layer {i}: input dim {spec.input_dim} != previous output "
                    f"{layers[i - 1].output_dim}"
                )
        self.layers = list(layers)
        self.layout: list[LayerSlot] = []
        offset = 0
        for i, spec in enumerate(layers):
            length = spec.input_dim * spec.output_dim + spec.output_dim
            self.layout.append(LayerSlot(i, offset, length))
            offset += length
        self.num_params = offset
        self.num_classes = layers[-1].output_dim

    def init_params(self, seed: int) -> np.ndarray:
        """Seeded uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)) per layer."""
        rng = SplitMix64(seed)
        values = np.empty(self.num_params, dtype=np.float64)
        idx = 0
        for spec in self.layers:
            bound = 1.0 / math.sqrt(spec.input_dim)
            for _ in range(spec.input_dim * spec.output_dim + spec.output_dim):
                values[idx] = bound * (2.0 * rng.random() - 1.0)
                idx += 1
        return values

    def views(self, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        """Zero-copy (W, b) views into a flat parameter vector."""
        if params.shape != (self.num_params,):
            raise ConfigError(f"parameter vector must have length {self.num_params}")
        out = []
        for spec, slot in zip(self.layers, self.layout):
            w_len = spec.input_dim * spec.output_dim
            w = params[slot.offset : slot.offset + w_len].reshape(spec.input_dim, spec.output_dim)
            b = params[slot.offset + w_len : slot.offset + slot.length]
            out.append((w, b))
        return out

    def _check_batch(self, inputs: np.ndarray, labels: np.ndarray) -> None:
        if inputs.ndim != 2 or inputs.shape[0] < 1:
            raise ConfigError("batch inputs must be a nonempty 2-D array")
        if inputs.shape[1] != self.layers[0].input_dim:
            raise ConfigError(
                f"feature dim {inputs.shape[1]} != model input {self.layers[0].input_dim}"
            )
        if labels.shape != (inputs.shape[0],):
            raise ConfigError("labels must be one class index per batch row")
        if labels.min() < 0 or labels.max() >= self.num_classes:
            raise ConfigError("label out of range")

    def _activations(
        self, params: np.ndarray, inputs: np.ndarray
    ) -> tuple[list[np.ndarray], list[np.ndarray]]:
        acts = [np.asarray(inputs, dtype=np.float64)]
        zs = []
        for spec, (w, b) in zip(self.layers, self.views(params)):
            z = acts[-1] @ w + b
            zs.append(z)
            acts.append(np.maximum(z, 0.0) if spec.activation == "relu" else z)
        return acts, zs

    def forward(
        self, params: np.ndarray, inputs: np.ndarray, labels: np.ndarray
    ) -> tuple[float, np.ndarray]:
        """Mean softmax cross-entropy over the batch, plus raw logits."""
        self._check_batch(inputs, labels)
        acts, _ = self._activations(params, inputs)
        logits = acts[-1]
        loss = _mean_cross_entropy(logits, labels)
        return loss, logits

    def loss_and_grad(
        self, params: np.ndarray, inputs: np.ndarray, labels: np.ndarray
    ) -> tuple[float, np.ndarray]:
        """Single fused forward/backward pass; gradient of the mean batch loss."""
        self._check_batch(inputs, labels)
        acts, zs = self._activations(params, inputs)
        logits = acts[-1]
        loss = _mean_cross_entropy(logits, labels)

        batch = labels.size
        shifted = logits - np.max(logits, axis=1, keepdims=True)
        probs = np.exp(shifted)
        probs /= probs.sum(axis=1, keepdims=True)
        dz = probs
        dz[np.arange(batch), labels] -= 1.0
        dz /= batch

        grad = np.zeros_like(params)
        views = self.views(params)
        for layer_id in reversed(range(len(self.layers))):
            w, _ = views[layer_id]
            slot = self.layout[layer_id]
            w_len = w.size
            grad_w = acts[layer_id].T @ dz
            grad_b = dz.sum(axis=0)
            grad[slot.offset : slot.offset + w_len] = grad_w.ravel()
            grad[slot.offset + w_len : slot.offset + slot.length] = grad_b
            if layer_id > 0:
                da = dz @ w.T
                if self.layers[layer_id - 1].activation == "relu":
                    dz = da * (zs[layer_id - 1] > 0.0)
                else:
                    dz = da
        if not np.all(np.isfinite(grad)):
            raise NumericError("non-finite gradient")
        return loss, grad

    def backward(self, params: np.ndarray, inputs: np.ndarray, labels: np.ndarray) -> np.ndarray:
        return self.loss_and_grad(params, inputs, labels)[1]


def _mean_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    # log-sum-exp form: finite for any finite logits.
    zmax = np.max(logits, axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.sum(np.exp(logits - zmax), axis=1))
    loss = float(np.mean(lse - logits[np.arange(labels.size), labels]))
    if not math.isfinite(loss):
        raise NumericError("non-finite loss")
    return loss


def sgd_step(params: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
    """One plain gradient step; returns a new vector."""
    if lr <= 0.0:
        raise ConfigError("lr must be positive")
    if params.shape != grad.shape:
        raise ConfigError("gradient length mismatch")
    return params - lr * grad


@dataclass(frozen=True, eq=False)
class LocalTrainResult:
    params: np.ndarray
    snapshot: GradientSnapshot
    train_loss: float


def local_train(
    model: Mlp,
    params: np.ndarray,
    inputs: np.ndarray,
    labels: np.ndarray,
    *,
    epochs: int,
    lr: float,
    batch_size: int,
    seed: int,
) -> LocalTrainResult:
    """Run ``epochs`` of mini-batch SGD over one client shard.

    Batch order is a per-epoch Fisher-Yates shuffle drawn from a SplitMix64
    stream seeded with ``seed``, so the pass is a pure function of its
    arguments. The returned snapshot holds the exact gradient of the final
    batch at the post-update parameters and the total parameter movement.
    With ``epochs == 0`` no batch exists, so both snapshot arrays are zero and
    the reported loss is the full-shard loss at the unchanged parameters.
    """
    if labels.size == 0:
        raise ConfigError("client shard is empty")
    if epochs < 0:
        raise ConfigError("epochs must be >= 0")
    if batch_size < 1:
        raise ConfigError("batch_size must be >= 1")
    if lr < 0.0:
        raise ConfigError("lr must be >= 0")

    start = params
    current = params
    rng = SplitMix64(seed)
    order = list(range(labels.size))
    losses: list[float] = []
    last_batch: tuple[np.ndarray, np.ndarray] | None = None

    for _ in range(epochs):
        rng.shuffle(order)
        for lo in range(0, len(order), batch_size):
            idx = order[lo : lo + batch_size]
            batch_x = inputs[idx]
            batch_y = labels[idx]
            loss, grad = model.loss_and_grad(current, batch_x, batch_y)
            if lr > 0.0:
                current = sgd_step(current, grad, lr)
            losses.append(loss)
            last_batch = (batch_x, batch_y)

    if last_batch is None:
        exact = np.zeros_like(params)
        train_loss, _ = model.forward(current, inputs, labels)
    else:
        exact = model.backward(current, last_batch[0], last_batch[1])
        train_loss = float(np.mean(losses))

    snapshot = GradientSnapshot(exact_grad=exact, delta_theta=current - start)
    return LocalTrainResult(params=current, snapshot=snapshot, train_loss=train_loss)
