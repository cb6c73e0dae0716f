"""LARS and SGD-momentum optimizers with bias/batch-norm exclusion, and the
linear-warmup + cosine-annealing learning-rate schedule.

Only kind == "weight" parameters receive weight decay or LARS trust
adaptation; bias and batch-norm parameters take plain SGD-momentum steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import NonFiniteGradient, StepOutOfRange
from .layers import ParamTensor


@dataclass
class Schedule:
    base_lr: float
    warmup_steps: int
    total_steps: int

    def __post_init__(self):
        assert 0 <= self.warmup_steps < self.total_steps


def lr_at(step: int, s: Schedule) -> float:
    """Linear ramp 0 -> base_lr over warmup, then cosine decay to 0."""
    if not 0 <= step <= s.total_steps:
        raise StepOutOfRange(f"step {step} not in [0, {s.total_steps}]")
    if step < s.warmup_steps:
        return s.base_lr * step / s.warmup_steps
    frac = (step - s.warmup_steps) / (s.total_steps - s.warmup_steps)
    return 0.5 * s.base_lr * (1.0 + math.cos(math.pi * frac))


@dataclass
class OptimState:
    momentum: float = 0.9
    weight_decay: float = 1e-6
    trust_coefficient: float = 0.001
    lars_eps: float = 0.0
    buffers: dict[str, np.ndarray] = field(default_factory=dict)

    def buffer_for(self, p: ParamTensor) -> np.ndarray:
        if p.name not in self.buffers:
            self.buffers[p.name] = np.zeros_like(p.values)
        return self.buffers[p.name]


def _check_finite(p: ParamTensor) -> None:
    if not np.all(np.isfinite(p.grads)):
        raise NonFiniteGradient(p.name)


def lars_step(params: Iterable[ParamTensor], state: OptimState, lr: float) -> None:
    """LARS update for weights; plain momentum (no decay, no trust) for the rest.

    weight: g' = grad + wd*w; trust = tc*|w|/(|g'| + eps) when both norms are
    positive, else 1; v <- momentum*v + trust*lr*g'; w <- w - v
    """
    for p in params:
        _check_finite(p)
        v = state.buffer_for(p)
        if p.kind == "weight":
            g = p.grads + state.weight_decay * p.values
            w_norm = np.linalg.norm(p.values)
            g_norm = np.linalg.norm(g)
            if w_norm > 0.0 and g_norm > 0.0:
                trust = state.trust_coefficient * w_norm / (g_norm + state.lars_eps)
            else:
                trust = 1.0
            v *= state.momentum
            v += trust * lr * g
        else:
            v *= state.momentum
            v += lr * p.grads
        p.values -= v


def sgd_momentum_step(params: Iterable[ParamTensor], state: OptimState,
                      lr: float) -> None:
    """v <- momentum*v + grad (+ wd*w for weights); w <- w - lr*v"""
    for p in params:
        _check_finite(p)
        g = p.grads
        if p.kind == "weight" and state.weight_decay != 0.0:
            g = g + state.weight_decay * p.values
        v = state.buffer_for(p)
        v *= state.momentum
        v += g
        p.values -= lr * v
