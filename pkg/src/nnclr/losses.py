"""Training objectives: InfoNCE, SimCLR, NNCLR (two-view symmetrized, with
the optional symmetric-denominator term), and NNSiam.

Every loss l2-normalizes its inputs internally, so loss values are invariant
to positive rescaling of any input row. Retrieved neighbors are constants:
their gradient slots come back identically zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ZeroVector
from .numerics import l2_normalize, l2_normalize_backward, softmax_cross_entropy
from .support_set import SupportSet


@dataclass
class LossOutput:
    loss: float
    grads: dict[str, np.ndarray] = field(default_factory=dict)


def infonce(z_i: np.ndarray, z_pos: np.ndarray, negatives: np.ndarray,
            tau: float) -> LossOutput:
    """Single-query contrastive loss: one positive against a set of negatives.

    -log[ exp(zi.z+/tau) / (exp(zi.z+/tau) + sum_neg exp(zi.z-/tau)) ]
    with all rows normalized first. No negatives means the numerator equals
    the denominator and the loss is exactly 0.
    """
    z_i = np.atleast_2d(np.asarray(z_i, dtype=np.float64))
    z_pos = np.atleast_2d(np.asarray(z_pos, dtype=np.float64))
    negatives = np.asarray(negatives, dtype=np.float64).reshape(-1, z_i.shape[1])
    if negatives.shape[0] == 0:
        return LossOutput(0.0, {
            "z_i": np.zeros_like(z_i), "z_pos": np.zeros_like(z_pos),
            "negatives": np.zeros_like(negatives)})
    zi_h = l2_normalize(z_i)
    zp_h = l2_normalize(z_pos)
    neg_h = l2_normalize(negatives)
    cands = np.concatenate([zp_h, neg_h], axis=0)       # positive first
    logits = (zi_h @ cands.T) / tau                     # 1 x (1+K)
    loss, dlogits = softmax_cross_entropy(logits, np.array([0]))
    g_zi_h = (dlogits @ cands) / tau
    g_cands = (dlogits.T @ zi_h) / tau
    return LossOutput(loss, {
        "z_i": l2_normalize_backward(z_i, g_zi_h),
        "z_pos": l2_normalize_backward(z_pos, g_cands[:1]),
        "negatives": l2_normalize_backward(negatives, g_cands[1:]),
    })


def _row_ce(logits: np.ndarray) -> tuple[float, np.ndarray]:
    n = logits.shape[0]
    return softmax_cross_entropy(logits, np.arange(n))


def simclr_loss(z1: np.ndarray, z2: np.ndarray, tau: float) -> LossOutput:
    """Mean over rows of -log[ exp(s_ii/tau) / sum_k exp(s_ik/tau) ] where
    s = normalized z1 @ z2^T; gradients flow to both inputs."""
    z1 = np.asarray(z1, dtype=np.float64)
    z2 = np.asarray(z2, dtype=np.float64)
    zh1 = l2_normalize(z1)
    zh2 = l2_normalize(z2)
    logits = (zh1 @ zh2.T) / tau
    loss, dlogits = _row_ce(logits)
    g1 = (dlogits @ zh2) / tau
    g2 = (dlogits.T @ zh1) / tau
    return LossOutput(loss, {
        "z1": l2_normalize_backward(z1, g1),
        "z2": l2_normalize_backward(z2, g2),
    })


def _nn_half(nn: np.ndarray, p: np.ndarray, tau: float,
             symmetric_denominator: bool) -> tuple[float, np.ndarray]:
    """One symmetrization half: row-wise CE on (normalized nn) @ (normalized
    p)^T / tau with diagonal labels. nn is a constant; returns (loss, grad_p).

    With the symmetric-denominator flag the half averages in the column-wise
    CE of the same logits (denominator over NN(z_k, Q) for fixed p_i).
    """
    p = np.asarray(p, dtype=np.float64)
    nn_h = l2_normalize(np.asarray(nn, dtype=np.float64))
    p_h = l2_normalize(p)
    logits = (nn_h @ p_h.T) / tau
    loss_r, dlog_r = _row_ce(logits)
    if symmetric_denominator:
        loss_c, dlog_c = _row_ce(logits.T)
        loss = 0.5 * (loss_r + loss_c)
        dlog = 0.5 * (dlog_r + dlog_c.T)
    else:
        loss = loss_r
        dlog = dlog_r
    g_ph = (dlog.T @ nn_h) / tau
    return loss, l2_normalize_backward(p, g_ph)


def nnclr_loss(z1: np.ndarray, z2: np.ndarray, p1: np.ndarray, p2: np.ndarray,
               queue: SupportSet, tau: float,
               symmetric_denominator: bool = False,
               retrieve=None) -> LossOutput:
    """Two-view symmetrized nearest-neighbor contrastive loss:
    L(NN(z1), p2)/2 + L(NN(z2), p1)/2.

    z1/z2 are only retrieval queries; gradients flow into p1/p2 alone. The
    retrieve callable (query -> neighbors) defaults to hard top-1 lookup and
    lets the caller swap in top-k sampling, soft or oracle retrieval.
    """
    if retrieve is None:
        retrieve = lambda q: queue.nearest(q)[0]
    nn1 = retrieve(z1)
    nn2 = retrieve(z2)
    loss_a, grad_p2 = _nn_half(nn1, p2, tau, symmetric_denominator)
    loss_b, grad_p1 = _nn_half(nn2, p1, tau, symmetric_denominator)
    return LossOutput(0.5 * loss_a + 0.5 * loss_b, {
        "p1": 0.5 * grad_p1,
        "p2": 0.5 * grad_p2,
        "nn1": np.zeros_like(nn1),
        "nn2": np.zeros_like(nn2),
    })


def _neg_cosine(p: np.ndarray, nn_h: np.ndarray) -> tuple[float, np.ndarray]:
    norms = np.linalg.norm(p, axis=1, keepdims=True)
    if np.any(norms <= 1e-12):
        raise ZeroVector("prediction row with vanishing norm")
    p_h = p / norms
    cos = np.sum(p_h * nn_h, axis=1, keepdims=True)
    n = p.shape[0]
    loss = float(-np.mean(cos))
    grad_p = -(nn_h - p_h * cos) / (norms * n)
    return loss, grad_p


def nnsiam_loss(p1: np.ndarray, p2: np.ndarray, nn1: np.ndarray,
                nn2: np.ndarray) -> LossOutput:
    """Negative-cosine objective with retrieved neighbors on the constant
    branch: -mean cos(p1, nn2)/2 - mean cos(p2, nn1)/2."""
    p1 = np.asarray(p1, dtype=np.float64)
    p2 = np.asarray(p2, dtype=np.float64)
    nn1_h = l2_normalize(np.asarray(nn1, dtype=np.float64))
    nn2_h = l2_normalize(np.asarray(nn2, dtype=np.float64))
    loss_a, g1 = _neg_cosine(p1, nn2_h)
    loss_b, g2 = _neg_cosine(p2, nn1_h)
    return LossOutput(0.5 * loss_a + 0.5 * loss_b, {
        "p1": 0.5 * g1,
        "p2": 0.5 * g2,
        "nn1": np.zeros_like(nn1),
        "nn2": np.zeros_like(nn2),
    })
