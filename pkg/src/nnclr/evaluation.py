"""Frozen-feature evaluation: linear probe on backbone features, stratified
label-fraction probes, and the NN label-match report over a run's checkpoints.
"""

from __future__ import annotations

import glob
import os
from dataclasses import dataclass

import numpy as np

from .checkpoint import load_checkpoint, restore_model
from .data import Dataset
from .errors import CheckpointMissing, ClassMissingFromTrain
from .layers import Linear
from .model import Model
from .numerics import softmax_cross_entropy
from .optim import OptimState, Schedule, lr_at, sgd_momentum_step
from .support_set import SupportSet


@dataclass
class ProbeConfig:
    epochs: int = 90
    lr: float = 0.1
    batch_size: int = 256
    momentum: float = 0.9
    label_fraction: float = 1.0
    seed: int = 0


def extract_features(model: Model, dataset: Dataset,
                     batch_size: int = 512) -> np.ndarray:
    """Backbone features h in inference mode (running batch-norm stats)."""
    feats = []
    for start in range(0, len(dataset), batch_size):
        x = dataset.samples[start:start + batch_size].reshape(
            -1, dataset.input_dim)
        h, _ = model.encode(x, mode="eval")
        feats.append(h)
    return np.concatenate(feats)


def stratified_subset(labels: np.ndarray, fraction: float,
                      rng: np.random.Generator) -> np.ndarray:
    """Per-class subsample keeping class balance; at least 1 sample per class."""
    assert 0 < fraction <= 1.0
    picks = []
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        k = max(1, int(round(fraction * len(members))))
        picks.append(rng.choice(members, size=k, replace=False))
    return np.sort(np.concatenate(picks))


def linear_probe(model: Model, train: Dataset, test: Dataset,
                 cfg: ProbeConfig) -> dict:
    """Multinomial logistic regression on frozen backbone features.

    SGD-momentum with a cosine-annealed learning rate; returns top1 and, when
    the label space allows it, top5 test accuracy.
    """
    if train.labels is None or test.labels is None:
        raise ClassMissingFromTrain("probe needs labeled datasets")
    if len(np.unique(train.labels)) < train.num_classes:
        raise ClassMissingFromTrain(
            f"train split covers {len(np.unique(train.labels))} of "
            f"{train.num_classes} classes")
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 10]))
    feats = extract_features(model, train)
    labels = train.labels
    if cfg.label_fraction < 1.0:
        keep = stratified_subset(labels, cfg.label_fraction, rng)
        feats, labels = feats[keep], labels[keep]

    c = train.num_classes
    clf = Linear(feats.shape[1], c, rng, name="probe")
    params = list(clf.params())
    state = OptimState(momentum=cfg.momentum, weight_decay=0.0)
    n_steps = max(1, len(feats) // cfg.batch_size) * cfg.epochs
    sched = Schedule(base_lr=cfg.lr, warmup_steps=0, total_steps=n_steps)

    step = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(len(feats))
        for start in range(0, len(feats) - cfg.batch_size + 1, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            for p in params:
                p.zero_grad()
            logits, cache = clf.forward(feats[idx])
            _, dlogits = softmax_cross_entropy(logits, labels[idx])
            clf.backward(dlogits, cache)
            sgd_momentum_step(params, state, lr_at(min(step, n_steps), sched))
            step += 1

    test_feats = extract_features(model, test)
    logits, _ = clf.forward(test_feats)
    pred = np.argmax(logits, axis=1)
    result = {"top1": float(np.mean(pred == test.labels)),
              "label_fraction": cfg.label_fraction,
              "num_train": int(len(feats))}
    if c >= 5:
        top5 = np.argsort(-logits, axis=1)[:, :5]
        result["top5"] = float(np.mean(np.any(top5 == test.labels[:, None], axis=1)))
    return result


def run_checkpoints(run_dir: str) -> list[str]:
    paths = sorted(glob.glob(os.path.join(run_dir, "checkpoint_epoch_*.nncq")))
    final = os.path.join(run_dir, "checkpoint_final.nncq")
    if os.path.exists(final):
        paths.append(final)
    if not paths:
        raise CheckpointMissing(f"no checkpoints under {run_dir}")
    return paths


def nn_stats_report(run_dir: str, dataset: Dataset, queue_size: int,
                    sample_size: int = 1024, seed: int = 0) -> list[dict]:
    """NN label-match rate per checkpoint of a finished run.

    For each checkpoint: embed a fixed dataset sample, fill a labeled queue
    with those embeddings, and measure how often a held-out query's top-1
    neighbor shares its label.
    """
    if dataset.labels is None:
        raise ClassMissingFromTrain("nn stats need a labeled dataset")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 11]))
    n_fill = min(queue_size, len(dataset) // 2)
    pick = rng.choice(len(dataset), size=n_fill + min(sample_size, len(dataset) - n_fill),
                      replace=False)
    fill_idx, query_idx = pick[:n_fill], pick[n_fill:]

    report = []
    for path in run_checkpoints(run_dir):
        payload = load_checkpoint(path)
        model = restore_model(payload)
        z_fill = model.encode(dataset.samples[fill_idx].reshape(len(fill_idx), -1),
                              mode="eval")[1]
        z_query = model.encode(dataset.samples[query_idx].reshape(len(query_idx), -1),
                               mode="eval")[1]
        queue = SupportSet(n_fill, z_fill.shape[1], rng, with_labels=True,
                           num_classes=dataset.num_classes, label_rng=rng)
        queue.push(z_fill, dataset.labels[fill_idx])
        rate = queue.nn_label_match_rate(z_query, dataset.labels[query_idx])
        report.append({"checkpoint": os.path.basename(path),
                       "step": payload["step"], "nn_match": rate})
    return report
