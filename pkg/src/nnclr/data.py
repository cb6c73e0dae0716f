"""Dataset providers: Gaussian blob clusters on the unit sphere (the primary
correctness testbed) and the CIFAR-10 binary record format.

Labels ride along for evaluation and diagnostics only; the pretraining loss
path never reads them except in oracle-NN mode, and a dataset can be handed
out with label access disabled to prove it.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import FileMissing, LabelOutOfRange, RecordSizeMismatch, SeparationUnsatisfiable

CIFAR_RECORD_BYTES = 3073  # 1 label byte + 3 * 32 * 32 pixel bytes
CIFAR_SIDE = 32


@dataclass
class Dataset:
    samples: np.ndarray           # (N, dim) vectors or (N, H, W, 3) images
    labels: Optional[np.ndarray]  # None when label access is disabled
    num_classes: int
    split: str

    def __len__(self) -> int:
        return self.samples.shape[0]

    def without_labels(self) -> "Dataset":
        return Dataset(self.samples, None, self.num_classes, self.split)

    @property
    def input_dim(self) -> int:
        return int(np.prod(self.samples.shape[1:]))


@dataclass
class BlobSpec:
    num_classes: int = 8
    samples_per_class: int = 1000
    ambient_dim: int = 16
    cluster_std: float = 0.1
    seed: int = 0

    def __post_init__(self):
        assert self.num_classes >= 2
        assert self.cluster_std > 0


def _blob_means(spec: BlobSpec, max_attempts: int = 10000) -> np.ndarray:
    """Cluster means on the unit hypersphere, rejection-sampled so every pair
    is separated by more than a 4-sigma chord (two 2-sigma shells clear)."""
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0]))
    min_chord = min(4.0 * spec.cluster_std, 1.9)
    means: list[np.ndarray] = []
    for _ in range(max_attempts):
        cand = rng.standard_normal(spec.ambient_dim)
        cand /= np.linalg.norm(cand)
        if all(np.linalg.norm(cand - m) > min_chord for m in means):
            means.append(cand)
            if len(means) == spec.num_classes:
                return np.stack(means)
    raise SeparationUnsatisfiable(
        f"could not place {spec.num_classes} means with chord > {min_chord:.3f} "
        f"in dim {spec.ambient_dim} after {max_attempts} attempts")


def gen_blobs(spec: BlobSpec, split: str = "train") -> Dataset:
    """Isotropic Gaussian clusters around shared per-seed means; train and
    test splits draw independent noise but share the means."""
    means = _blob_means(spec)
    split_idx = {"train": 1, "test": 2}[split]
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, split_idx]))
    n = spec.num_classes * spec.samples_per_class
    labels = np.repeat(np.arange(spec.num_classes), spec.samples_per_class)
    noise = rng.normal(0.0, spec.cluster_std, size=(n, spec.ambient_dim))
    samples = means[labels] + noise
    return Dataset(samples, labels, spec.num_classes, split)


# ---- CIFAR-10 binary format ----

def decode_cifar_records(raw: bytes, path: str = "<buffer>") -> tuple[np.ndarray, np.ndarray]:
    """Decode 3073-byte records: label byte then R, G, B planes row-major.

    Pixels are scaled to [0, 1]; images come back as (N, 32, 32, 3) float64.
    """
    if len(raw) % CIFAR_RECORD_BYTES != 0:
        raise RecordSizeMismatch(
            f"{path}: {len(raw)} bytes is not a multiple of {CIFAR_RECORD_BYTES}")
    arr = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
    labels = arr[:, 0].astype(np.int64)
    if labels.size and (labels.min() < 0 or labels.max() > 9):
        raise LabelOutOfRange(f"{path}: label {labels.max()} outside [0, 10)")
    planes = arr[:, 1:].reshape(-1, 3, CIFAR_SIDE, CIFAR_SIDE)
    images = planes.transpose(0, 2, 3, 1).astype(np.float64) / 255.0
    return images, labels


def encode_cifar_records(images: np.ndarray, labels: np.ndarray) -> bytes:
    """Inverse of decode_cifar_records; expects pixel values in [0, 1]."""
    pix = np.round(np.asarray(images) * 255.0).astype(np.uint8)
    planes = pix.transpose(0, 3, 1, 2).reshape(len(labels), -1)
    recs = np.concatenate(
        [np.asarray(labels, dtype=np.uint8)[:, None], planes], axis=1)
    return recs.tobytes()


def load_cifar10(dir_path: str) -> tuple[Dataset, Dataset]:
    """Load the standard binary batches; returns (train, test)."""
    train_files = [os.path.join(dir_path, f"data_batch_{i}.bin") for i in range(1, 6)]
    test_file = os.path.join(dir_path, "test_batch.bin")
    for path in train_files + [test_file]:
        if not os.path.exists(path):
            raise FileMissing(path)
    imgs, labs = [], []
    for path in train_files:
        with open(path, "rb") as fh:
            x, y = decode_cifar_records(fh.read(), path)
        imgs.append(x)
        labs.append(y)
    train = Dataset(np.concatenate(imgs), np.concatenate(labs), 10, "train")
    with open(test_file, "rb") as fh:
        x, y = decode_cifar_records(fh.read(), test_file)
    test = Dataset(x, y, 10, "test")
    return train, test


def epoch_batches(n_samples: int, batch_size: int, seed: int, epoch: int,
                  drop_last: bool = True):
    """Yield index arrays for one epoch; order is a pure function of
    (seed, epoch)."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 3, epoch]))
    order = rng.permutation(n_samples)
    stop = n_samples - (n_samples % batch_size) if drop_last else n_samples
    for start in range(0, stop, batch_size):
        yield order[start:start + batch_size]
