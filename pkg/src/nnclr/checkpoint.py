"""Versioned binary checkpoints: magic "NNCQ", format version, then a pickled
payload holding encoder spec, parameters, optimizer buffers, queue state and
RNG state."""

from __future__ import annotations

import os
import pickle
from typing import Optional

import numpy as np

from .errors import CheckpointFormatError, CheckpointMissing
from .model import EncoderSpec, Model
from .optim import OptimState
from .support_set import SupportSet

MAGIC = b"NNCQ"
VERSION = 1


def save_checkpoint(path: str, model: Model, optim_state: Optional[OptimState],
                    queue: Optional[SupportSet], step: int,
                    rng_state: Optional[dict] = None,
                    extra: Optional[dict] = None) -> None:
    payload = {
        "spec": model.spec,
        "model": model.state_dict(),
        "optim": dict(optim_state.buffers) if optim_state is not None else None,
        "step": step,
        "rng_state": rng_state,
        "extra": extra or {},
    }
    if queue is not None:
        payload["queue"] = {
            "capacity": queue.capacity,
            "dim": queue.dim,
            "replacement": queue.replacement,
            "buffer": queue.buffer.copy(),
            "write_cursor": queue.write_cursor,
            "labels": None if queue.labels is None else queue.labels.copy(),
        }
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(VERSION.to_bytes(4, "little"))
        pickle.dump(payload, fh, protocol=pickle.HIGHEST_PROTOCOL)
    os.replace(tmp, path)


def load_checkpoint(path: str) -> dict:
    if not os.path.exists(path):
        raise CheckpointMissing(path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise CheckpointFormatError(f"{path}: bad magic bytes {magic!r}")
        version = int.from_bytes(fh.read(4), "little")
        if version != VERSION:
            raise CheckpointFormatError(f"{path}: unsupported version {version}")
        return pickle.load(fh)


def restore_model(payload: dict) -> Model:
    """Rebuild a Model from a checkpoint payload."""
    spec: EncoderSpec = payload["spec"]
    model = Model(spec, np.random.default_rng(0))
    model.load_state_dict(payload["model"])
    return model
