"""Dense layers, small MLPs, losses and an Adam optimizer on float64 numpy arrays.

Gradients are computed by explicit reverse-mode passes: ``Mlp.forward_cached``
records the activations, ``Mlp.backward`` consumes an upstream gradient and
returns one ``(dW, db)`` pair per layer. Inputs may be a single vector or a
batch of row vectors.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

ACTIVATIONS = ("relu", "identity")
EPS_LOG = 1e-12


class DimensionError(ValueError):
    pass


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray  # (out_dim,)
    activation: str = "identity"

    def __post_init__(self):
        self.weights = np.array(self.weights, dtype=np.float64, ndmin=2)
        self.bias = np.array(self.bias, dtype=np.float64).reshape(-1)
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weights.shape[0] != self.bias.shape[0]:
            raise DimensionError(
                f"bias has {self.bias.shape[0]} entries, weights have {self.weights.shape[0]} rows"
            )
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ValueError("layer parameters must be finite")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def glorot(cls, in_dim: int, out_dim: int, rng: np.random.Generator, activation="identity"):
        limit = math.sqrt(6.0 / (in_dim + out_dim))
        w = rng.uniform(-limit, limit, size=(out_dim, in_dim))
        return cls(w, np.zeros(out_dim), activation)

    @classmethod
    def zeros(cls, in_dim: int, out_dim: int, activation="identity"):
        return cls(np.zeros((out_dim, in_dim)), np.zeros(out_dim), activation)


@dataclass
class Mlp:
    layers: list[DenseLayer] = field(default_factory=list)

    def __post_init__(self):
        if not self.layers:
            raise ValueError("an Mlp needs at least one layer")
        for i, (a, b) in enumerate(zip(self.layers[:-1], self.layers[1:])):
            if a.out_dim != b.in_dim:
                raise DimensionError(
                    f"layer {i} outputs {a.out_dim} values but layer {i + 1} expects {b.in_dim}"
                )

    @classmethod
    def build(cls, sizes: Sequence[int], rng: np.random.Generator, hidden_activation="relu"):
        """Glorot-initialised MLP; hidden layers use ``hidden_activation``, the last is linear."""
        layers = []
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            act = "identity" if i == len(sizes) - 2 else hidden_activation
            layers.append(DenseLayer.glorot(a, b, rng, act))
        return cls(layers)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim not in (1, 2) or x.shape[-1] != self.in_dim:
            raise DimensionError(f"expected input dim {self.in_dim}, got shape {x.shape}")
        return x

    def forward(self, x) -> np.ndarray:
        return self.forward_cached(x)[0]

    def forward_cached(self, x):
        x = self._check_input(x)
        inputs, pre = [], []
        h = x
        for layer in self.layers:
            inputs.append(h)
            z = h @ layer.weights.T + layer.bias
            pre.append(z)
            h = np.maximum(z, 0.0) if layer.activation == "relu" else z
        return h, (inputs, pre)

    def backward(self, cache, grad_out):
        """Return ``(grads, grad_input)`` where grads is a list of ``(dW, db)`` per layer."""
        inputs, pre = cache
        g = np.asarray(grad_out, dtype=np.float64)
        if g.shape != pre[-1].shape:
            raise DimensionError(f"upstream gradient shape {g.shape} != output shape {pre[-1].shape}")
        grads = [None] * len(self.layers)
        for i in reversed(range(len(self.layers))):
            layer = self.layers[i]
            if layer.activation == "relu":
                g = g * (pre[i] > 0)
            x = inputs[i]
            if g.ndim == 1:
                dW = np.outer(g, x)
                db = g.copy()
            else:
                dW = g.T @ x
                db = g.sum(axis=0)
            grads[i] = (dW, db)
            g = g @ layer.weights
        return grads, g

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend([layer.weights, layer.bias])
        return out

    def copy(self) -> "Mlp":
        return Mlp([DenseLayer(l.weights.copy(), l.bias.copy(), l.activation) for l in self.layers])

    def to_dict(self) -> dict:
        return {
            "layers": [
                {
                    "in": l.in_dim,
                    "out": l.out_dim,
                    "activation": l.activation,
                    "w": [float(v) for v in l.weights.ravel()],
                    "b": [float(v) for v in l.bias],
                }
                for l in self.layers
            ]
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Mlp":
        layers = []
        for entry in doc["layers"]:
            w = np.asarray(entry["w"], dtype=np.float64)
            if w.size != entry["in"] * entry["out"]:
                raise DimensionError(
                    f"layer declares {entry['out']}x{entry['in']} but has {w.size} weights"
                )
            layers.append(DenseLayer(w.reshape(entry["out"], entry["in"]), entry["b"], entry["activation"]))
        return cls(layers)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "Mlp":
        return cls.from_dict(json.loads(text))


def softmax(z) -> np.ndarray:
    """Numerically stable softmax over the last axis."""
    z = np.asarray(z, dtype=np.float64)
    if z.size == 0 or z.shape[-1] == 0:
        raise ValueError("softmax of an empty vector")
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward(p: np.ndarray, grad_p: np.ndarray) -> np.ndarray:
    """Pull a gradient w.r.t. softmax outputs back to the logits."""
    return p * (grad_p - np.sum(grad_p * p, axis=-1, keepdims=True))


def mse_loss(pred: float, target: float) -> float:
    return (float(pred) - float(target)) ** 2


def cross_entropy_loss(probs, target_bin: int) -> float:
    probs = np.asarray(probs, dtype=np.float64)
    if not 0 <= target_bin < probs.shape[-1]:
        raise IndexError(f"target bin {target_bin} outside [0, {probs.shape[-1]})")
    return float(-math.log(probs[target_bin] + EPS_LOG))


def cross_entropy_logits_grad(probs: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """d/dlogits of -log(p[target] + EPS_LOG) for a batch of softmax rows."""
    rows = np.arange(probs.shape[0])
    pt = probs[rows, targets]
    onehot = np.zeros_like(probs)
    onehot[rows, targets] = 1.0
    return -(pt / (pt + EPS_LOG))[:, None] * (onehot - probs)


LossFn = Callable[[np.ndarray], tuple]


def gradients(model: Mlp, x, loss_fn: LossFn):
    """Reverse-mode gradients of ``loss_fn(model(x))`` for every layer parameter.

    ``loss_fn`` maps the model output to ``(loss, dloss/doutput)``; the loss must be a scalar.
    Returns ``(loss, grads)`` with grads a list of ``(dW, db)`` pairs.
    """
    out, cache = model.forward_cached(x)
    loss, grad_out = loss_fn(out)
    if np.ndim(loss) != 0:
        raise ValueError(f"loss must be a scalar, got shape {np.shape(loss)}")
    grads, _ = model.backward(cache, grad_out)
    return float(loss), grads


@dataclass
class AdamConfig:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


class Adam:
    """Adam over a fixed list of models; updates their arrays in place."""

    def __init__(self, models: Sequence[Mlp], cfg: AdamConfig | None = None):
        self.models = list(models)
        self.cfg = cfg or AdamConfig()
        params = [p for m in self.models for p in m.parameters()]
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: Sequence[list]) -> None:
        """``grads`` holds one per-layer ``(dW, db)`` list for each model."""
        if len(grads) != len(self.models):
            raise DimensionError(f"expected gradients for {len(self.models)} models, got {len(grads)}")
        flat = [g for model_grads in grads for pair in model_grads for g in pair]
        params = [p for m in self.models for p in m.parameters()]
        if len(flat) != len(params):
            raise DimensionError("gradient set does not match model parameters")
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1**self.t
        bc2 = 1.0 - c.beta2**self.t
        for i, (p, g) in enumerate(zip(params, flat)):
            if g.shape != p.shape:
                raise DimensionError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g * g
            p -= c.learning_rate * (self.m[i] / bc1) / (np.sqrt(self.v[i] / bc2) + c.eps)


def optimizer_step(model: Mlp, grads, cfg: AdamConfig, state: Adam | None = None) -> tuple[Mlp, Adam]:
    """Functional wrapper: returns an updated copy of ``model`` and the optimizer state."""
    new = model.copy()
    if state is None:
        state = Adam([new], cfg)
    else:
        state.models = [new]
    state.step([grads])
    return new, state
