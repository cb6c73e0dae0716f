"""Dense-matrix primitives: row normalization, softmax cross-entropy, and the
finite-difference harness every hand-derived backward pass is checked against.

All correctness-critical code runs in float64. Matrices are 2-d numpy arrays,
row = one sample.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import RowNormUnderflow

NORM_EPS = 1e-12


def assert_finite(x: np.ndarray, what: str = "array") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise FloatingPointError(f"non-finite values in {what}")
    return x


def l2_normalize(x: np.ndarray, eps: float = NORM_EPS) -> np.ndarray:
    """Scale each row to unit Euclidean norm.

    Raises RowNormUnderflow if any row norm is <= eps; a vanishing row means
    the embedding collapsed and must not be silently clamped.
    """
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    if np.any(norms <= eps):
        bad = int(np.argmin(norms))
        raise RowNormUnderflow(f"row {bad} has norm {norms[bad, 0]:.3e} <= {eps:.3e}")
    return x / norms


def l2_normalize_backward(x: np.ndarray, grad_y: np.ndarray) -> np.ndarray:
    """Gradient of l2_normalize: for y = x/|x|, dL/dx = (g - y (y.g)) / |x| per row."""
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    y = x / norms
    dot = np.sum(y * grad_y, axis=1, keepdims=True)
    return (grad_y - y * dot) / norms


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction for stability."""
    shifted = logits - np.max(logits, axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=1, keepdims=True)


def softmax_cross_entropy(
    logits: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean row-wise cross-entropy and its gradient w.r.t. the logits.

    loss = mean_i of -log softmax(logits[i])[labels[i]]
    grad = (softmax - one_hot) / n
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.intp)
    n = logits.shape[0]
    shifted = logits - np.max(logits, axis=1, keepdims=True)
    log_z = np.log(np.sum(np.exp(shifted), axis=1))
    log_probs = shifted - log_z[:, None]
    loss = float(-np.mean(log_probs[np.arange(n), labels]))
    grad = np.exp(log_probs)
    grad[np.arange(n), labels] -= 1.0
    grad /= n
    return loss, grad


def finite_difference_gradient(
    f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of a scalar function, entry by entry."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + h
        fp = f(x)
        x[idx] = orig - h
        fm = f(x)
        x[idx] = orig
        grad[idx] = (fp - fm) / (2.0 * h)
    return grad


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    """Max elementwise relative error |a-b| / max(1, |a|, |b|)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / denom))
