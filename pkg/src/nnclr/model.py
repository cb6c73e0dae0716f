"""Encoder (backbone MLP + projection head), prediction head, and the
optional EMA shadow encoder.

The backbone output h feeds the linear probe; the projection output z feeds
the contrastive loss and the support set. z is NOT l2-normalized here;
normalization happens inside the losses and retrieval ops.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from .layers import BatchNorm, Linear, ParamTensor, ReLU, Sequential


@dataclass
class EncoderSpec:
    input_dim: int
    backbone_dims: list[int] = field(default_factory=lambda: [256, 256])
    feature_dim: int = 128
    projection_dims: list[int] = field(default_factory=lambda: [128, 128, 32])
    prediction_dims: list[int] = field(default_factory=lambda: [128, 32])
    use_prediction_head: bool = True

    @property
    def d(self) -> int:
        return self.projection_dims[-1]

    def validate(self) -> None:
        assert len(self.projection_dims) == 3, "projection head has 3 linear layers"
        assert len(self.prediction_dims) == 2, "prediction head has 2 linear layers"
        assert self.prediction_dims[-1] == self.d, "prediction head must end in d"


def _mlp_backbone(spec: EncoderSpec, rng: np.random.Generator) -> Sequential:
    layers = []
    prev = spec.input_dim
    for i, width in enumerate(spec.backbone_dims):
        layers.append(Linear(prev, width, rng, name=f"backbone.{i}.linear"))
        layers.append(BatchNorm(width, name=f"backbone.{i}.bn"))
        layers.append(ReLU())
        prev = width
    layers.append(Linear(prev, spec.feature_dim, rng, name="backbone.out"))
    return Sequential(layers)


def _projection_head(spec: EncoderSpec, rng: np.random.Generator) -> Sequential:
    # 3 linear layers, each followed by batch norm; ReLU after all but the last bn
    layers = []
    prev = spec.feature_dim
    for i, width in enumerate(spec.projection_dims):
        layers.append(Linear(prev, width, rng, name=f"projection.{i}.linear"))
        layers.append(BatchNorm(width, name=f"projection.{i}.bn"))
        if i < len(spec.projection_dims) - 1:
            layers.append(ReLU())
        prev = width
    return Sequential(layers)


def _prediction_head(spec: EncoderSpec, rng: np.random.Generator) -> Sequential:
    # hidden linear + bn + relu, final linear bare
    hidden, out = spec.prediction_dims
    return Sequential([
        Linear(spec.d, hidden, rng, name="prediction.0.linear"),
        BatchNorm(hidden, name="prediction.0.bn"),
        ReLU(),
        Linear(hidden, out, rng, name="prediction.out"),
    ])


class Model:
    """Backbone + projection head + (optional) prediction head."""

    def __init__(self, spec: EncoderSpec, rng: np.random.Generator):
        spec.validate()
        self.spec = spec
        self.backbone = _mlp_backbone(spec, rng)
        self.projection = _projection_head(spec, rng)
        self.prediction = _prediction_head(spec, rng) if spec.use_prediction_head else None

    # ---- parameters ----

    def encoder_params(self) -> Iterator[ParamTensor]:
        yield from self.backbone.params()
        yield from self.projection.params()

    def params(self) -> Iterator[ParamTensor]:
        yield from self.encoder_params()
        if self.prediction is not None:
            yield from self.prediction.params()

    def zero_grad(self) -> None:
        for p in self.params():
            p.zero_grad()

    # ---- forward / backward ----

    def encode_with_cache(self, x: np.ndarray, training: bool = True,
                          update_running: bool = True):
        h, bb_cache = self.backbone.forward(x, training, update_running)
        z, pj_cache = self.projection.forward(h, training, update_running)
        return h, z, (bb_cache, pj_cache)

    def encode(self, x: np.ndarray, mode: str = "train"):
        """Return (h, z): backbone features and projection embeddings."""
        training = mode == "train"
        h, z, _ = self.encode_with_cache(x, training, update_running=training)
        return h, z

    def encode_backward(self, grad_z: np.ndarray, cache,
                        grad_h: Optional[np.ndarray] = None) -> np.ndarray:
        bb_cache, pj_cache = cache
        g = self.projection.backward(grad_z, pj_cache)
        if grad_h is not None:
            g = g + grad_h
        return self.backbone.backward(g, bb_cache)

    def predict_with_cache(self, z: np.ndarray, training: bool = True,
                           update_running: bool = True):
        if self.prediction is None:
            return z, None
        return self.prediction.forward(z, training, update_running)

    def predict(self, z: np.ndarray, mode: str = "train") -> np.ndarray:
        """Prediction head g(z); exact identity when the head is disabled."""
        if self.prediction is None:
            return z
        training = mode == "train"
        p, _ = self.prediction.forward(z, training, update_running=training)
        return p

    def predict_backward(self, grad_p: np.ndarray, cache) -> np.ndarray:
        if self.prediction is None:
            return grad_p
        return self.prediction.backward(grad_p, cache)

    # ---- state ----

    def param_dict(self) -> dict[str, np.ndarray]:
        return {p.name: p.values for p in self.params()}

    def bn_layers(self) -> Iterator[BatchNorm]:
        stacks = [self.backbone, self.projection]
        if self.prediction is not None:
            stacks.append(self.prediction)
        for stack in stacks:
            for layer in stack.layers:
                if isinstance(layer, BatchNorm):
                    yield layer

    def state_dict(self) -> dict:
        bn_stats = []
        for bn in self.bn_layers():
            bn_stats.append((bn.state.running_mean.copy(), bn.state.running_var.copy()))
        return {
            "params": {p.name: p.values.copy() for p in self.params()},
            "bn_stats": bn_stats,
        }

    def load_state_dict(self, state: dict) -> None:
        for p in self.params():
            p.values[...] = state["params"][p.name]
        for bn, (mean, var) in zip(self.bn_layers(), state["bn_stats"]):
            bn.state.running_mean[...] = mean
            bn.state.running_var[...] = var


class MomentumEncoder:
    """EMA shadow copy of the online encoder (backbone + projection only).

    The shadow produces the embeddings that fill the queue and serve as NN
    queries; the online branch produces the predictions the loss trains.
    """

    def __init__(self, online: Model, m: float):
        assert 0.0 <= m < 1.0
        self.m = m
        self.shadow = copy.deepcopy(online)
        self.shadow.prediction = None  # only the encoder is shadowed

    def update(self, online: Model, m: Optional[float] = None) -> None:
        ema_update(self.shadow, online, self.m if m is None else m)

    def encode(self, x: np.ndarray, mode: str = "train"):
        return self.shadow.encode(x, mode)


def ema_update(target: Model, online: Model, m: float) -> None:
    """shadow <- m * shadow + (1 - m) * online, for parameters and bn stats."""
    online_params = {p.name: p for p in online.encoder_params()}
    for p in target.encoder_params():
        src = online_params[p.name]
        p.values[...] = m * p.values + (1.0 - m) * src.values
    online_bns = {bn.name: bn for bn in online.bn_layers()}
    for bn in target.bn_layers():
        src = online_bns[bn.name]
        bn.state.running_mean[...] = m * bn.state.running_mean + (1 - m) * src.state.running_mean
        bn.state.running_var[...] = m * bn.state.running_var + (1 - m) * src.state.running_var
