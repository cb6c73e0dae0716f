"""Fixed-capacity FIFO queue of past projection embeddings and every
nearest-neighbor retrieval variant used in training (top-1, top-k sampling,
soft weighting, label-restricted lookup).

Stored rows are l2-normalized; retrieval normalizes the queries and compares
dot products, which on unit vectors is equivalent to the Euclidean argmin.
Ties are broken by lowest buffer index for determinism. Retrieval returns
copies: nothing in the training loop may write gradients into the buffer.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .errors import BatchLargerThanQueue, KOutOfRange, LabelsUnavailable
from .numerics import l2_normalize


class SupportSet:
    def __init__(self, capacity: int, dim: int, rng: np.random.Generator,
                 replacement: str = "fifo", with_labels: bool = False,
                 num_classes: int = 0, label_rng: Optional[np.random.Generator] = None):
        assert replacement in ("fifo", "random")
        self.capacity = capacity
        self.dim = dim
        self.replacement = replacement
        # random init: rows i.i.d. standard normal, then unit-normalized, so
        # retrieval is valid before the first push
        self.buffer = l2_normalize(rng.standard_normal((capacity, dim)))
        self.write_cursor = 0
        self.filled = capacity
        self._replace_rng = rng
        self.labels: Optional[np.ndarray] = None
        if with_labels:
            assert num_classes > 0
            lr = label_rng if label_rng is not None else rng
            self.labels = lr.integers(0, num_classes, size=capacity)

    # ---- writes ----

    def push(self, batch: np.ndarray, batch_labels: Optional[np.ndarray] = None) -> None:
        """Overwrite the b oldest rows (fifo) or b random distinct rows (random)."""
        b = batch.shape[0]
        if b > self.capacity:
            raise BatchLargerThanQueue(f"batch {b} > capacity {self.capacity}")
        rows = l2_normalize(np.asarray(batch, dtype=np.float64))
        if self.replacement == "fifo":
            idx = (self.write_cursor + np.arange(b)) % self.capacity
            self.write_cursor = int((self.write_cursor + b) % self.capacity)
        else:
            idx = self._replace_rng.choice(self.capacity, size=b, replace=False)
        self.buffer[idx] = rows
        if self.labels is not None:
            if batch_labels is not None:
                self.labels[idx] = batch_labels
        return None

    # ---- retrieval (read-only) ----

    def _similarities(self, query: np.ndarray) -> np.ndarray:
        q = l2_normalize(np.asarray(query, dtype=np.float64))
        return q @ self.buffer.T

    def nearest(self, query: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Top-1 neighbor per query row; argmax dot == argmin distance on unit rows."""
        sims = self._similarities(query)
        indices = np.argmax(sims, axis=1)  # argmax takes the lowest index on ties
        return self.buffer[indices].copy(), indices

    def top_k_sample(self, query: np.ndarray, k: int,
                     rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """One of the k nearest rows per query, chosen uniformly at random."""
        if not 1 <= k <= self.capacity:
            raise KOutOfRange(f"k={k} not in [1, {self.capacity}]")
        if k == 1:
            return self.nearest(query)
        sims = self._similarities(query)
        # exact top-k, ranked best-first with lowest-index tie break
        order = np.argsort(-sims, axis=1, kind="stable")[:, :k]
        pick = rng.integers(0, k, size=query.shape[0])
        indices = order[np.arange(query.shape[0]), pick]
        return self.buffer[indices].copy(), indices

    def soft_weights(self, query: np.ndarray, temperature_s: float = 0.1) -> np.ndarray:
        """Per-query softmax weights over all buffer rows; rows sum to 1."""
        assert temperature_s > 0
        sims = self._similarities(query) / temperature_s
        sims -= np.max(sims, axis=1, keepdims=True)
        w = np.exp(sims)
        w /= np.sum(w, axis=1, keepdims=True)
        return w

    def soft_nn(self, query: np.ndarray, temperature_s: float = 0.1) -> np.ndarray:
        """Similarity-weighted convex combination of all buffer rows.

        The output is not re-normalized; normalization happens inside the
        loss, matching the hard-NN pathway.
        """
        return self.soft_weights(query, temperature_s) @ self.buffer

    def oracle_nn(self, query: np.ndarray,
                  query_labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Nearest row restricted to matching labels; unrestricted fallback
        when no same-label row exists."""
        if self.labels is None:
            raise LabelsUnavailable("support set has no label buffer")
        sims = self._similarities(query)
        masked = np.where(self.labels[None, :] == np.asarray(query_labels)[:, None],
                          sims, -np.inf)
        indices = np.argmax(masked, axis=1)
        no_match = ~np.isfinite(masked[np.arange(query.shape[0]), indices])
        if np.any(no_match):
            indices[no_match] = np.argmax(sims[no_match], axis=1)
        return self.buffer[indices].copy(), indices

    def nn_label_match_rate(self, query: np.ndarray,
                            query_labels: np.ndarray) -> float:
        """Fraction of queries whose top-1 NN carries the query's label."""
        if self.labels is None:
            raise LabelsUnavailable("support set has no label buffer")
        _, indices = self.nearest(query)
        return float(np.mean(self.labels[indices] == np.asarray(query_labels)))

    def nbytes(self) -> int:
        return self.buffer.nbytes
