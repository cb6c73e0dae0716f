"""Finite-difference validation of every hand-derived backward pass.

Each check builds a scalar objective, computes the analytic gradient through
the implementation under test, and compares against central differences.
Shared by the `nnclr gradcheck` subcommand, the unit tests and the
acceptance suite.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import losses
from .layers import BatchNorm, Linear, ReLU
from .model import EncoderSpec, Model
from .numerics import finite_difference_gradient, rel_err
from .support_set import SupportSet

TOLERANCE = 1e-4


def _worst(errs: list[float]) -> float:
    return max(errs)


def check_linear(seeds: range) -> float:
    errs = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        layer = Linear(3, 5, rng)
        x = rng.standard_normal((4, 3))
        r = rng.standard_normal((4, 5))  # fixed projection makes the loss scalar

        def loss_of(_):
            y, _c = layer.forward(x)
            return float(np.sum(y * r))

        y, cache = layer.forward(x)
        for p in layer.params():
            p.zero_grad()
        grad_x = layer.backward(r, cache)
        errs.append(rel_err(grad_x, finite_difference_gradient(loss_of, x)))
        errs.append(rel_err(layer.W.grads,
                            finite_difference_gradient(loss_of, layer.W.values)))
        errs.append(rel_err(layer.b.grads,
                            finite_difference_gradient(loss_of, layer.b.values)))
    return _worst(errs)


def check_batchnorm(seeds: range) -> float:
    errs = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        layer = BatchNorm(5)
        layer.gain.values[...] = rng.uniform(0.5, 1.5, 5)
        layer.bias.values[...] = rng.standard_normal(5)
        x = rng.standard_normal((8, 5))
        r = rng.standard_normal((8, 5))

        def loss_of(_):
            y, _c = layer.forward(x, training=True, update_running=False)
            return float(np.sum(y * r))

        y, cache = layer.forward(x, training=True, update_running=False)
        for p in layer.params():
            p.zero_grad()
        grad_x = layer.backward(r, cache)
        errs.append(rel_err(grad_x, finite_difference_gradient(loss_of, x)))
        errs.append(rel_err(layer.gain.grads,
                            finite_difference_gradient(loss_of, layer.gain.values)))
        errs.append(rel_err(layer.bias.grads,
                            finite_difference_gradient(loss_of, layer.bias.values)))
    return _worst(errs)


def check_relu(seeds: range) -> float:
    errs = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        layer = ReLU()
        x = rng.standard_normal((6, 4))
        x[np.abs(x) < 1e-3] = 0.5  # keep FD probes away from the kink
        r = rng.standard_normal((6, 4))

        def loss_of(_):
            y, _c = layer.forward(x)
            return float(np.sum(y * r))

        _, cache = layer.forward(x)
        errs.append(rel_err(layer.backward(r, cache),
                            finite_difference_gradient(loss_of, x)))
    return _worst(errs)


def check_infonce(seeds: range) -> float:
    errs = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        z_i = rng.standard_normal((1, 6))
        z_pos = rng.standard_normal((1, 6))
        negs = rng.standard_normal((5, 6))
        out = losses.infonce(z_i, z_pos, negs, tau=0.3)
        errs.append(rel_err(out.grads["z_i"], finite_difference_gradient(
            lambda v: losses.infonce(v, z_pos, negs, 0.3).loss, z_i)))
        errs.append(rel_err(out.grads["z_pos"], finite_difference_gradient(
            lambda v: losses.infonce(z_i, v, negs, 0.3).loss, z_pos)))
        errs.append(rel_err(out.grads["negatives"], finite_difference_gradient(
            lambda v: losses.infonce(z_i, z_pos, v, 0.3).loss, negs)))
    return _worst(errs)


def check_simclr(seeds: range) -> float:
    errs = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        z1 = rng.standard_normal((4, 8))
        z2 = rng.standard_normal((4, 8))
        out = losses.simclr_loss(z1, z2, tau=0.2)
        errs.append(rel_err(out.grads["z1"], finite_difference_gradient(
            lambda v: losses.simclr_loss(v, z2, 0.2).loss, z1)))
        errs.append(rel_err(out.grads["z2"], finite_difference_gradient(
            lambda v: losses.simclr_loss(z1, v, 0.2).loss, z2)))
    return _worst(errs)


def check_nnclr(seeds: range, symmetric_denominator: bool = False) -> float:
    errs = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        queue = SupportSet(32, 8, rng)
        z1 = rng.standard_normal((4, 8))
        z2 = rng.standard_normal((4, 8))
        p1 = rng.standard_normal((4, 8))
        p2 = rng.standard_normal((4, 8))

        def loss_of(a, b):
            return losses.nnclr_loss(z1, z2, a, b, queue, 0.2,
                                     symmetric_denominator).loss

        out = losses.nnclr_loss(z1, z2, p1, p2, queue, 0.2, symmetric_denominator)
        errs.append(rel_err(out.grads["p1"], finite_difference_gradient(
            lambda v: loss_of(v, p2), p1)))
        errs.append(rel_err(out.grads["p2"], finite_difference_gradient(
            lambda v: loss_of(p1, v), p2)))
    return _worst(errs)


def check_nnsiam(seeds: range) -> float:
    errs = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        p1, p2 = rng.standard_normal((2, 4, 8))
        nn1, nn2 = rng.standard_normal((2, 4, 8))
        out = losses.nnsiam_loss(p1, p2, nn1, nn2)
        errs.append(rel_err(out.grads["p1"], finite_difference_gradient(
            lambda v: losses.nnsiam_loss(v, p2, nn1, nn2).loss, p1)))
        errs.append(rel_err(out.grads["p2"], finite_difference_gradient(
            lambda v: losses.nnsiam_loss(p1, v, nn1, nn2).loss, p2)))
    return _worst(errs)


def check_encode_loss(seeds: range) -> float:
    """End-to-end: simclr objective through prediction-free encoder stack."""
    errs = []
    spec = EncoderSpec(input_dim=6, backbone_dims=[8], feature_dim=8,
                       projection_dims=[8, 8, 4], prediction_dims=[8, 4],
                       use_prediction_head=False)
    for seed in seeds:
        rng = np.random.default_rng(seed)
        model = Model(spec, rng)
        x1 = rng.standard_normal((4, 6))
        x2 = rng.standard_normal((4, 6))

        def loss_of(_):
            _, z1, _ = model.encode_with_cache(x1, training=True, update_running=False)
            _, z2, _ = model.encode_with_cache(x2, training=True, update_running=False)
            return losses.simclr_loss(z1, z2, 0.2).loss

        model.zero_grad()
        _, z1, c1 = model.encode_with_cache(x1, training=True, update_running=False)
        _, z2, c2 = model.encode_with_cache(x2, training=True, update_running=False)
        out = losses.simclr_loss(z1, z2, 0.2)
        grad_x1 = model.encode_backward(out.grads["z1"], c1)
        model.encode_backward(out.grads["z2"], c2)
        errs.append(rel_err(grad_x1, finite_difference_gradient(loss_of, x1)))
        # one representative parameter tensor per stack
        w = model.backbone.layers[0].W
        errs.append(rel_err(w.grads, finite_difference_gradient(loss_of, w.values)))
        g = model.projection.layers[1].gain
        errs.append(rel_err(g.grads, finite_difference_gradient(loss_of, g.values)))
    return _worst(errs)


COMPONENTS: dict[str, Callable[[range], float]] = {
    "linear": check_linear,
    "batchnorm": check_batchnorm,
    "relu": check_relu,
    "infonce": check_infonce,
    "simclr_loss": check_simclr,
    "nnclr_loss": check_nnclr,
    "nnclr_loss_symmetric": lambda seeds: check_nnclr(seeds, True),
    "nnsiam_loss": check_nnsiam,
    "encode_loss": check_encode_loss,
}


def run_suite(n_seeds: int = 10) -> dict[str, float]:
    """Worst relative error per component over n_seeds random seeds each."""
    seeds = range(n_seeds)
    return {name: fn(seeds) for name, fn in COMPONENTS.items()}
