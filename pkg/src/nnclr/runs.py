"""Run orchestration shared by the CLI and the ablation driver: dataset
construction, manifest writing, and the pretrain+probe pipeline."""

from __future__ import annotations

import json
import os
import subprocess
import time

from .config import DataConfig, TrainConfig, config_to_pairs
from .data import BlobSpec, Dataset, gen_blobs, load_cifar10
from .errors import ConfigError
from .evaluation import ProbeConfig, linear_probe
from .train import pretrain


def build_datasets(dcfg: DataConfig) -> tuple[Dataset, Dataset]:
    if dcfg.kind == "blobs":
        spec = BlobSpec(num_classes=dcfg.num_classes,
                        samples_per_class=dcfg.samples_per_class,
                        ambient_dim=dcfg.dim, cluster_std=dcfg.std,
                        seed=dcfg.seed)
        test_spec = BlobSpec(num_classes=dcfg.num_classes,
                             samples_per_class=max(1, dcfg.samples_per_class // 4),
                             ambient_dim=dcfg.dim, cluster_std=dcfg.std,
                             seed=dcfg.seed)
        train, test = gen_blobs(spec, "train"), gen_blobs(test_spec, "test")
    elif dcfg.kind == "cifar10":
        train, test = load_cifar10(dcfg.path)
    else:
        raise ConfigError("data.kind", f"unknown kind {dcfg.kind!r}")
    if dcfg.limit:
        train = Dataset(train.samples[:dcfg.limit], train.labels[:dcfg.limit],
                        train.num_classes, train.split)
    if dcfg.test_limit:
        test = Dataset(test.samples[:dcfg.test_limit], test.labels[:dcfg.test_limit],
                       test.num_classes, test.split)
    if not dcfg.labels_enabled:
        train = train.without_labels()
    return train, test


def _git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"],
                             capture_output=True, text=True, timeout=5)
        return out.stdout.strip() or "unknown"
    except OSError:
        return "unknown"


def write_manifest(run_dir: str, cfg: TrainConfig, overrides: dict) -> str:
    """Atomically write the run manifest at run start."""
    os.makedirs(run_dir, exist_ok=True)
    path = os.path.join(run_dir, "manifest.json")
    manifest = {
        "config": config_to_pairs(cfg),
        "overrides": overrides,
        "git_describe": _git_describe(),
        "seed": cfg.seed,
        "start_time": time.time(),
        "end_time": None,
        "artifacts": {
            "metrics": "metrics.jsonl",
            "eval": "eval.jsonl",
            "checkpoint": "checkpoint_final.nncq",
        },
    }
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    os.replace(tmp, path)
    return path


def finish_manifest(run_dir: str) -> None:
    path = os.path.join(run_dir, "manifest.json")
    with open(path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    manifest["end_time"] = time.time()
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    os.replace(tmp, path)


def pretrain_and_probe(cfg: TrainConfig, run_dir: str | None = None,
                       probe_epochs: int = 30) -> dict:
    """Pretrain, probe, and summarize one configuration.

    Returns top1, final loss, final NN-match and wall-clock throughput; used
    by the ablation driver and the trend experiments.
    """
    train, test = build_datasets(cfg.data)
    t0 = time.perf_counter()
    model, metrics = pretrain(cfg, train, run_dir=run_dir)
    elapsed = time.perf_counter() - t0
    probe_train, probe_test = train, test
    if probe_train.labels is None:
        probe_train, probe_test = build_datasets(
            DataConfig(**{**cfg.data.__dict__, "labels_enabled": True}))
    result = linear_probe(model, probe_train, probe_test,
                          ProbeConfig(epochs=probe_epochs, seed=cfg.seed))
    nn_series = [m.nn_match for m in metrics if m.nn_match is not None]
    summary = {
        "top1": result["top1"],
        "top5": result.get("top5"),
        "final_loss": metrics[-1].loss,
        "final_nn_match": nn_series[-1] if nn_series else None,
        "steps_per_sec": len(metrics) / elapsed if elapsed > 0 else None,
        "queue_bytes": cfg.queue_size * cfg.encoder.d * 8,
    }
    if run_dir is not None:
        with open(os.path.join(run_dir, "eval.jsonl"), "a", encoding="utf-8") as fh:
            fh.write(json.dumps(result) + "\n")
    return summary
