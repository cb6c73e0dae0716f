"""Pretraining loop: view generation, encoding, NN retrieval, loss, optimizer
step, queue update, metric emission.

Within a step the queue is read first and pushed last, so a batch's own fresh
embeddings are never retrieval candidates in the same step. Labels only feed
diagnostics (and oracle-NN retrieval); disabling them leaves the parameter
trajectory bit-identical for hard/soft retrieval.
"""

from __future__ import annotations

import json
import os
import time
from collections import deque
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from . import losses
from .augment import make_views_batch
from .checkpoint import save_checkpoint
from .config import TrainConfig
from .data import Dataset, epoch_batches
from .errors import ConfigError, LabelsUnavailable, NonFiniteGradient
from .numerics import l2_normalize
from .model import Model, MomentumEncoder
from .optim import OptimState, Schedule, lars_step, lr_at
from .support_set import SupportSet

# fixed SeedSequence tags so optional features never shift another stream
_TAG_MODEL = 5
_TAG_QUEUE = 6
_TAG_QUEUE_LABELS = 7
_TAG_TOPK = 8


@dataclass
class StepMetrics:
    step: int
    epoch: int
    loss: float
    lr: float
    nn_match: Optional[float]
    wall_ms: float

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def build_model(cfg: TrainConfig) -> Model:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, _TAG_MODEL]))
    cfg.encoder.use_prediction_head = cfg.use_prediction_head
    return Model(cfg.encoder, rng)


def build_queue(cfg: TrainConfig, num_classes: int, with_labels: bool) -> SupportSet:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, _TAG_QUEUE]))
    label_rng = np.random.default_rng(
        np.random.SeedSequence([cfg.seed, _TAG_QUEUE_LABELS]))
    return SupportSet(cfg.queue_size, cfg.encoder.d, rng,
                      replacement=cfg.replacement, with_labels=with_labels,
                      num_classes=num_classes, label_rng=label_rng)


def make_retriever(queue: SupportSet, cfg: TrainConfig,
                   topk_rng: np.random.Generator, batch_labels=None):
    """Query -> neighbors closure for the configured retrieval variant."""
    if cfg.nn_kind == "soft":
        return lambda q: queue.soft_nn(q, cfg.soft_temperature)
    if cfg.nn_kind == "oracle":
        if batch_labels is None:
            raise LabelsUnavailable("oracle-NN retrieval needs batch labels")
        return lambda q: queue.oracle_nn(q, batch_labels)[0]
    if cfg.top_k == 1:
        return lambda q: queue.nearest(q)[0]
    return lambda q: queue.top_k_sample(q, cfg.top_k, topk_rng)[0]


def _all_grads_finite(model: Model) -> bool:
    return all(np.all(np.isfinite(p.grads)) for p in model.params())


class _RefRing:
    """Reference ring-buffer model used to cross-check FIFO queue state."""

    def __init__(self, init_rows: np.ndarray):
        self.rows = deque(init_rows, maxlen=len(init_rows))

    def push(self, batch: np.ndarray) -> None:
        self.rows.extend(batch)

    def as_matrix(self, write_cursor: int) -> np.ndarray:
        # deque order is oldest-first; slot `write_cursor` holds the oldest row
        mat = np.stack(list(self.rows))
        m = len(self.rows)
        return np.roll(mat, write_cursor, axis=0) if write_cursor else mat


def pretrain(cfg: TrainConfig, dataset: Dataset,
             run_dir: Optional[str] = None,
             verify_queue: bool = True) -> tuple[Model, list[StepMetrics]]:
    """Run the full pretraining loop; returns the model and the metric series.

    When run_dir is given, metrics stream to metrics.jsonl and checkpoints are
    written there. Training aborts with NonFiniteGradient after saving a
    checkpoint of the last finite state.
    """
    cfg.validate()
    n = cfg.batch_size
    steps_per_epoch = len(dataset) // n
    if steps_per_epoch == 0:
        raise ConfigError("batch_size", "larger than the dataset")
    labels_enabled = dataset.labels is not None
    if cfg.nn_kind == "oracle" and not labels_enabled:
        raise LabelsUnavailable("oracle-NN pretraining needs a labeled dataset")

    model = build_model(cfg)
    target = MomentumEncoder(model, cfg.momentum_coeff) if cfg.use_momentum_encoder else None
    queue = build_queue(cfg, dataset.num_classes, labels_enabled)
    ref_ring = _RefRing(queue.buffer.copy()) if (verify_queue and cfg.replacement == "fifo") else None
    topk_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, _TAG_TOPK]))
    optim_state = OptimState(momentum=cfg.momentum, weight_decay=cfg.weight_decay,
                             trust_coefficient=cfg.trust_coefficient)
    sched = Schedule(base_lr=cfg.effective_lr(),
                     warmup_steps=cfg.warmup_epochs * steps_per_epoch,
                     total_steps=cfg.epochs * steps_per_epoch)

    metrics: list[StepMetrics] = []
    metrics_fh = None
    if run_dir is not None:
        os.makedirs(run_dir, exist_ok=True)
        metrics_fh = open(os.path.join(run_dir, "metrics.jsonl"), "w", encoding="utf-8")

    def checkpoint_path(tag: str) -> str:
        return os.path.join(run_dir, f"checkpoint_{tag}.nncq")

    def save(tag: str, step: int) -> None:
        if run_dir is None:
            return
        save_checkpoint(checkpoint_path(tag), model, optim_state, queue, step,
                        rng_state={"topk": topk_rng.bit_generator.state})

    step = 0
    try:
        for epoch in range(cfg.epochs):
            for idx in epoch_batches(len(dataset), n, cfg.seed, epoch):
                t0 = time.perf_counter()
                x = dataset.samples[idx]
                batch_labels = dataset.labels[idx] if labels_enabled else None
                v1, v2 = make_views_batch(x, cfg.augment, cfg.seed, epoch, idx)
                v1 = v1.reshape(n, -1)
                v2 = v2.reshape(n, -1)

                model.zero_grad()
                h1, z1, c1 = model.encode_with_cache(v1, training=True)
                h2, z2, c2 = model.encode_with_cache(v2, training=True)
                if target is not None:
                    # the shadow encoder feeds both the NN queries and the queue
                    _, q1, _ = target.shadow.encode_with_cache(v1, training=True,
                                                               update_running=False)
                    _, q2, _ = target.shadow.encode_with_cache(v2, training=True,
                                                               update_running=False)
                else:
                    q1, q2 = z1, z2

                retrieve = make_retriever(queue, cfg, topk_rng, batch_labels)
                nn_match = (queue.nn_label_match_rate(q1, batch_labels)
                            if labels_enabled else None)

                if cfg.objective == "simclr":
                    out_a = losses.simclr_loss(z1, z2, cfg.tau)
                    out_b = losses.simclr_loss(z2, z1, cfg.tau)
                    loss = 0.5 * out_a.loss + 0.5 * out_b.loss
                    model.encode_backward(0.5 * (out_a.grads["z1"] + out_b.grads["z2"]), c1)
                    model.encode_backward(0.5 * (out_a.grads["z2"] + out_b.grads["z1"]), c2)
                else:
                    p1, pc1 = model.predict_with_cache(z1, training=True)
                    p2, pc2 = model.predict_with_cache(z2, training=True)
                    if cfg.objective == "nnclr":
                        out = losses.nnclr_loss(q1, q2, p1, p2, queue, cfg.tau,
                                                cfg.symmetric_denominator, retrieve)
                    else:  # nnsiam
                        out = losses.nnsiam_loss(p1, p2, retrieve(q1), retrieve(q2))
                    loss = out.loss
                    model.encode_backward(model.predict_backward(out.grads["p1"], pc1), c1)
                    model.encode_backward(model.predict_backward(out.grads["p2"], pc2), c2)

                if not _all_grads_finite(model):
                    raise NonFiniteGradient(f"step {step}")
                lars_step(model.params(), optim_state, lr_at(step, sched))
                if target is not None:
                    target.update(model)

                queue.push(q1, batch_labels)
                if ref_ring is not None:
                    ref_ring.push(l2_normalize(q1))
                    if step % cfg.eval_every == 0:
                        ref = ref_ring.as_matrix(queue.write_cursor)
                        assert np.array_equal(ref, queue.buffer), "queue diverged from ring model"

                wall_ms = 0.0 if cfg.strict_deterministic else (time.perf_counter() - t0) * 1e3
                m = StepMetrics(step=step, epoch=epoch, loss=float(loss),
                                lr=lr_at(step, sched), nn_match=nn_match,
                                wall_ms=wall_ms)
                metrics.append(m)
                if metrics_fh is not None:
                    metrics_fh.write(m.to_json() + "\n")
                step += 1
            if (cfg.checkpoint_every_epochs
                    and (epoch + 1) % cfg.checkpoint_every_epochs == 0):
                save(f"epoch_{epoch + 1:04d}", step)
        save("final", step)
    except NonFiniteGradient:
        save("abort", step)
        raise
    finally:
        if metrics_fh is not None:
            metrics_fh.close()
    return model, metrics
