"""Trainable layer primitives with explicit forward/backward passes.

Forward passes return (output, cache); backward passes consume the cache and
accumulate parameter gradients into ParamTensor.grads. Caches are plain
objects so a layer instance can be used for several forwards per step (two
views) before any backward runs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import BatchTooSmall, ShapeMismatch

# kind determines weight-decay and LARS trust-adaptation eligibility:
# only "weight" gets either.
PARAM_KINDS = ("weight", "bias", "bn_gain", "bn_bias")


@dataclass
class ParamTensor:
    values: np.ndarray
    grads: np.ndarray
    kind: str
    name: str

    @classmethod
    def create(cls, values: np.ndarray, kind: str, name: str) -> "ParamTensor":
        assert kind in PARAM_KINDS, kind
        values = np.asarray(values, dtype=np.float64)
        return cls(values=values, grads=np.zeros_like(values), kind=kind, name=name)

    def zero_grad(self) -> None:
        self.grads.fill(0.0)


@dataclass
class BatchNormState:
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.9
    eps: float = 1e-5


class Linear:
    """y = x @ W (+ b). W has shape (in, out)."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator,
                 name: str = "linear", bias: bool = True):
        w = rng.normal(0.0, np.sqrt(2.0 / in_dim), size=(in_dim, out_dim))
        self.W = ParamTensor.create(w, "weight", f"{name}.W")
        self.b = ParamTensor.create(np.zeros(out_dim), "bias", f"{name}.b") if bias else None
        self.in_dim = in_dim
        self.out_dim = out_dim

    def params(self) -> Iterator[ParamTensor]:
        yield self.W
        if self.b is not None:
            yield self.b

    def forward(self, x: np.ndarray, training: bool = True):
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeMismatch(
                f"{self.W.name}: expected (*, {self.in_dim}), got {x.shape}")
        y = x @ self.W.values
        if self.b is not None:
            y = y + self.b.values
        return y, x

    def backward(self, grad_out: np.ndarray, cache) -> np.ndarray:
        x = cache
        if grad_out.shape != (x.shape[0], self.out_dim):
            raise ShapeMismatch(
                f"{self.W.name}: grad shape {grad_out.shape} vs ({x.shape[0]}, {self.out_dim})")
        self.W.grads += x.T @ grad_out
        if self.b is not None:
            self.b.grads += grad_out.sum(axis=0)
        return grad_out @ self.W.values.T


class BatchNorm:
    """Per-column batch normalization with learnable gain/bias.

    Training mode standardizes by the biased batch statistics and (optionally)
    updates the running stats by EMA; inference mode uses the running stats.
    """

    def __init__(self, dim: int, name: str = "bn", momentum: float = 0.9,
                 eps: float = 1e-5):
        self.gain = ParamTensor.create(np.ones(dim), "bn_gain", f"{name}.gain")
        self.bias = ParamTensor.create(np.zeros(dim), "bn_bias", f"{name}.bias")
        self.state = BatchNormState(
            running_mean=np.zeros(dim), running_var=np.ones(dim),
            momentum=momentum, eps=eps)
        self.dim = dim
        self.name = name

    def params(self) -> Iterator[ParamTensor]:
        yield self.gain
        yield self.bias

    def forward(self, x: np.ndarray, training: bool = True,
                update_running: bool = True):
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise ShapeMismatch(f"{self.name}: expected (*, {self.dim}), got {x.shape}")
        s = self.state
        if training:
            if x.shape[0] < 2:
                raise BatchTooSmall(
                    f"{self.name}: training-mode batch norm needs n >= 2, got {x.shape[0]}")
            mean = x.mean(axis=0)
            var = x.var(axis=0)  # biased
            if update_running:
                s.running_mean = s.momentum * s.running_mean + (1 - s.momentum) * mean
                s.running_var = s.momentum * s.running_var + (1 - s.momentum) * var
        else:
            mean = s.running_mean
            var = s.running_var
        inv_std = 1.0 / np.sqrt(var + s.eps)
        x_hat = (x - mean) * inv_std
        y = self.gain.values * x_hat + self.bias.values
        cache = (x_hat, inv_std, training, x.shape[0])
        return y, cache

    def backward(self, grad_out: np.ndarray, cache) -> np.ndarray:
        x_hat, inv_std, training, n = cache
        self.gain.grads += np.sum(grad_out * x_hat, axis=0)
        self.bias.grads += np.sum(grad_out, axis=0)
        g = grad_out * self.gain.values
        if not training:
            return g * inv_std
        # standard batch-norm backward through the batch statistics
        return (inv_std / n) * (
            n * g - np.sum(g, axis=0) - x_hat * np.sum(g * x_hat, axis=0))


class ReLU:
    """Elementwise max(0, x); derivative defined as 0 at exactly 0."""

    def params(self) -> Iterator[ParamTensor]:
        return iter(())

    def forward(self, x: np.ndarray, training: bool = True):
        mask = x > 0
        return x * mask, mask

    def backward(self, grad_out: np.ndarray, cache) -> np.ndarray:
        return grad_out * cache


class Sequential:
    """A stack of layers sharing the forward/backward cache protocol."""

    def __init__(self, layers: list):
        self.layers = layers

    def params(self) -> Iterator[ParamTensor]:
        for layer in self.layers:
            yield from layer.params()

    def forward(self, x: np.ndarray, training: bool = True,
                update_running: bool = True):
        caches = []
        for layer in self.layers:
            if isinstance(layer, BatchNorm):
                x, c = layer.forward(x, training, update_running)
            else:
                x, c = layer.forward(x, training)
            caches.append(c)
        return x, caches

    def backward(self, grad_out: np.ndarray, caches) -> np.ndarray:
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            grad_out = layer.backward(grad_out, cache)
        return grad_out
