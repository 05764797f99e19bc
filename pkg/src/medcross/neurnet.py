"""Fully-connected ReLU networks trained with mini-batch Adam or SGD.

Layout: ``L`` hidden layers of width ``K`` followed by a scalar output layer,
so a model holds ``L + 1`` (weight, bias) pairs. Weights use the row-vector
convention ``h_next = relu(h @ W + b)``.
"""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np


class Optimizer(str, enum.Enum):
    ADAM = "adam"
    SGD = "sgd"


class Loss(str, enum.Enum):
    MSE = "mse"
    CROSS_ENTROPY = "cross_entropy"


class Link(str, enum.Enum):
    IDENTITY = "identity"
    SIGMOID = "sigmoid"


ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
_P_LOW = np.finfo(np.float64).tiny
_P_HIGH = np.nextafter(1.0, 0.0)


class DimensionMismatch(ValueError):
    pass


class DivergedLoss(FloatingPointError):
    pass


@dataclass(frozen=True)
class NetworkSpec:
    depth: int = 2
    width: int = 50
    l1_input: float = 0.0
    epochs: int = 100
    batch_size: int = 100
    learning_rate: float = 1e-3
    optimizer: Optimizer = Optimizer.ADAM
    loss: Loss = Loss.MSE
    output_link: Link = Link.IDENTITY
    init_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "optimizer", Optimizer(self.optimizer))
        object.__setattr__(self, "loss", Loss(self.loss))
        object.__setattr__(self, "output_link", Link(self.output_link))
        if self.depth < 1 or self.width < 1:
            raise ValueError("depth and width must be at least 1")
        if self.l1_input < 0:
            raise ValueError("l1_input must be non-negative")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be at least 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.loss is Loss.CROSS_ENTROPY and self.output_link is not Link.SIGMOID:
            raise ValueError("cross-entropy loss requires the sigmoid output link")

    def n_parameters(self, n_inputs: int) -> int:
        sizes = [n_inputs] + [self.width] * self.depth + [1]
        return sum((a + 1) * b for a, b in zip(sizes[:-1], sizes[1:]))

    def for_binary_target(self) -> "NetworkSpec":
        return replace(self, loss=Loss.CROSS_ENTROPY, output_link=Link.SIGMOID)

    def for_continuous_target(self) -> "NetworkSpec":
        return replace(self, loss=Loss.MSE, output_link=Link.IDENTITY)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("optimizer", "loss", "output_link"):
            d[k] = d[k].value
        return d


@dataclass(frozen=True, eq=False)
class NetworkModel:
    weights: tuple[tuple[np.ndarray, np.ndarray], ...]
    spec: NetworkSpec
    train_loss_trace: tuple[float, ...] = field(default=())

    def __post_init__(self):
        prev = None
        for w, b in self.weights:
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise DimensionMismatch("bias must match the weight matrix output size")
            if prev is not None and w.shape[0] != prev:
                raise DimensionMismatch("layer shapes do not chain")
            prev = w.shape[1]
        if prev != 1:
            raise DimensionMismatch("the output layer must have a single unit")

    @property
    def n_inputs(self) -> int:
        return self.weights[0][0].shape[0]

    def dump_json(self) -> str:
        return json.dumps({"spec": self.spec.to_dict(),
                           "train_loss_trace": list(self.train_loss_trace)})


def init_model(n_inputs: int, spec: NetworkSpec, rng: np.random.Generator | None = None) -> NetworkModel:
    """He-uniform weights with bound sqrt(6 / fan_in); zero biases."""
    if rng is None:
        rng = np.random.default_rng(spec.init_seed)
    sizes = [n_inputs] + [spec.width] * spec.depth + [1]
    weights = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append((rng.uniform(-bound, bound, size=(fan_in, fan_out)),
                        np.zeros(fan_out)))
    return NetworkModel(tuple(weights), spec)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _logits(weights, x):
    h = x
    for w, b in weights[:-1]:
        h = np.maximum(h @ w + b, 0.0)
    w, b = weights[-1]
    return (h @ w + b)[:, 0]


def forward(model: NetworkModel, w):
    """Network output for one feature vector (returns a float) or a matrix of rows."""
    x = np.asarray(w, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != model.n_inputs:
        raise DimensionMismatch(f"expected {model.n_inputs} features, got {x.shape[1]}")
    z = _logits(model.weights, x)
    if model.spec.output_link is Link.SIGMOID:
        # keep saturated logits strictly inside (0, 1)
        out = np.clip(_sigmoid(z), _P_LOW, _P_HIGH)
    else:
        out = z
    return float(out[0]) if single else out


def _loss_grad(weights, spec: NetworkSpec, x, y, need_grad=True):
    acts = [x]
    h = x
    for w, b in weights[:-1]:
        h = np.maximum(h @ w + b, 0.0)
        acts.append(h)
    w_out, b_out = weights[-1]
    z = (h @ w_out + b_out)[:, 0]
    n = len(y)

    if spec.loss is Loss.CROSS_ENTROPY:
        data_loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
        dz = (_sigmoid(z) - y) / n
    elif spec.output_link is Link.SIGMOID:
        p = _sigmoid(z)
        r = p - y
        data_loss = float(np.mean(r * r))
        dz = 2.0 * r * p * (1.0 - p) / n
    else:
        r = z - y
        data_loss = float(np.mean(r * r))
        dz = 2.0 * r / n

    w1 = weights[0][0]
    loss = data_loss + spec.l1_input * float(np.abs(w1).sum())
    if not need_grad:
        return loss, None

    grads = [None] * len(weights)
    delta = dz[:, None]
    for i in range(len(weights) - 1, -1, -1):
        a = acts[i]
        grads[i] = (a.T @ delta, delta.sum(axis=0))
        if i > 0:
            delta = (delta @ weights[i][0].T) * (acts[i] > 0)
    if spec.l1_input:
        gw, gb = grads[0]
        grads[0] = (gw + spec.l1_input * np.sign(w1), gb)
    return loss, grads


def loss_and_gradient(model: NetworkModel, batch):
    """Mean data loss plus ``l1_input * |W1|_1`` and its (sub)gradient.

    The gradient has the same (weight, bias) layout as ``model.weights``;
    the penalty uses ``sign(0) = 0``.
    """
    x, y = batch
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if len(y) == 0:
        raise ValueError("empty batch")
    if x.shape[1] != model.n_inputs:
        raise DimensionMismatch(f"expected {model.n_inputs} features, got {x.shape[1]}")
    return _loss_grad(model.weights, model.spec, x, y)


def data_loss(model: NetworkModel, x, y) -> float:
    """Loss without the input-layer penalty (used for validation)."""
    unpenalized = replace(model.spec, l1_input=0.0)
    return _loss_grad(model.weights, unpenalized, np.asarray(x, float),
                      np.asarray(y, float).reshape(-1), need_grad=False)[0]


def train(data, spec: NetworkSpec) -> NetworkModel:
    """Fit a network by mini-batch first-order optimisation for ``spec.epochs`` epochs.

    Initialisation and the per-epoch shuffles both draw from a generator
    seeded with ``spec.init_seed``; identical inputs give bitwise-identical
    weights. The loss trace records the full-data penalised loss after each
    epoch.
    """
    x, y = data
    x = np.ascontiguousarray(np.atleast_2d(np.asarray(x, dtype=np.float64)))
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    n = len(y)
    if n < spec.batch_size:
        raise ValueError(f"need at least batch_size={spec.batch_size} rows, got {n}")

    rng = np.random.default_rng(spec.init_seed)
    init = init_model(x.shape[1], spec, rng).weights
    # one flat parameter vector; the (W, b) pairs are views into it
    theta = np.concatenate([a.ravel() for layer in init for a in layer])
    params, offset = [], 0
    for w, b in init:
        pair = []
        for a in (w, b):
            pair.append(theta[offset:offset + a.size].reshape(a.shape))
            offset += a.size
        params.append(tuple(pair))
    adam = spec.optimizer is Optimizer.ADAM
    m1 = np.zeros_like(theta)
    m2 = np.zeros_like(theta)
    lr = spec.learning_rate
    step = 0
    trace = []
    for epoch in range(spec.epochs):
        order = rng.permutation(n)
        for start in range(0, n, spec.batch_size):
            idx = order[start:start + spec.batch_size]
            _, grads = _loss_grad(params, spec, x[idx], y[idx])
            g = np.concatenate([a.ravel() for layer in grads for a in layer])
            step += 1
            if adam:
                m1 *= ADAM_BETA1
                m1 += (1.0 - ADAM_BETA1) * g
                m2 *= ADAM_BETA2
                m2 += (1.0 - ADAM_BETA2) * (g * g)
                c1 = 1.0 - ADAM_BETA1 ** step
                c2 = 1.0 - ADAM_BETA2 ** step
                theta -= (lr / c1) * m1 / (np.sqrt(m2 / c2) + ADAM_EPS)
            else:
                theta -= lr * g
        loss, _ = _loss_grad(params, spec, x, y, need_grad=False)
        if not np.isfinite(loss):
            raise DivergedLoss(f"non-finite training loss at epoch {epoch + 1}: {loss}")
        trace.append(loss)
    weights = tuple((w.copy(), b.copy()) for w, b in params)
    return NetworkModel(weights, spec, tuple(trace))
