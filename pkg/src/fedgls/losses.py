"""The three local training objectives, each with value and analytic gradient.

Each loss returns the gradient with respect to the single input that chains
to its designated parameter group; everything else is treated as constant:

* contrastive_loss -> dZ (chains through the GCN and adjacency processor to
  the graph learner's weights; H is a constant),
* cross_entropy_loss -> dlogits (chains to the GCN, or MLP, parameters),
* kd_loss -> dH (chains to the feature encoder; teacher Z and the shared
  classifier head are constants).

The contrastive denominator deliberately excludes the positive pair and the
h-h pairs: it sums exp(sim(z_i, h_j)/tau) + exp(sim(z_i, z_j)/tau) over
j != i only, so the loss can go negative. That is the trained objective, not
a bug; the conventional NT-Xent form appears only in tests as a comparison.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError
from .numerics import (
    as_matrix,
    cosine_sim_backward_both,
    cosine_sim_backward_left,
    cosine_sim_matrix,
    row_softmax,
)


@dataclass
class LossOutput:
    """Scalar objective plus the gradient that feeds one parameter group."""

    value: float
    grad: np.ndarray


def contrastive_loss(z, h, tau: float) -> LossOutput:
    """Mean per-node contrastive objective; gradient flows to z only."""
    z = as_matrix(z, "z")
    h = as_matrix(h, "h")
    if z.shape != h.shape:
        raise ShapeError(f"z {z.shape} and h {h.shape} must match")
    n = z.shape[0]
    if n < 2:
        raise ParameterError("contrastive loss needs at least 2 nodes (empty denominator)")
    if tau <= 0.0:
        raise ParameterError("tau must be positive")

    a = cosine_sim_matrix(z, h) / tau
    b = cosine_sim_matrix(z, z) / tau
    off = ~np.eye(n, dtype=bool)
    neg = np.where(off, a, -np.inf)
    neg_b = np.where(off, b, -np.inf)
    row_max = np.maximum(neg.max(axis=1), neg_b.max(axis=1))
    ea = np.where(off, np.exp(a - row_max[:, None]), 0.0)
    eb = np.where(off, np.exp(b - row_max[:, None]), 0.0)
    denom = ea.sum(axis=1) + eb.sum(axis=1)
    log_denom = row_max + np.log(denom)
    value = float(np.mean(-np.diag(a) + log_denom))

    # d value / d a_ij and d value / d b_ij
    da = ea / denom[:, None] / (n * tau)
    da[np.arange(n), np.arange(n)] = -1.0 / (n * tau)
    db = eb / denom[:, None] / (n * tau)
    dz = cosine_sim_backward_left(da, z, h) + cosine_sim_backward_both(db, z)
    return LossOutput(value=value, grad=dz)


def cross_entropy_loss(logits, labels, train_mask) -> LossOutput:
    """Mean negative log-likelihood over the masked nodes; gradient on logits."""
    logits = as_matrix(logits, "logits")
    labels = np.asarray(labels, dtype=np.int64)
    mask = np.asarray(train_mask, dtype=np.int64)
    if mask.size == 0:
        raise ParameterError("cross entropy needs a nonempty training mask")
    lm = logits[mask]
    y = labels[mask]
    shifted = lm - lm.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    value = float(-log_probs[np.arange(mask.size), y].mean())
    dmasked = np.exp(log_probs)
    dmasked[np.arange(mask.size), y] -= 1.0
    dlogits = np.zeros_like(logits)
    dlogits[mask] = dmasked / mask.size
    return LossOutput(value=value, grad=dlogits)


def kd_loss(z, h, wc, bc) -> LossOutput:
    """Summed KL(head(z) || head(h)) over nodes; gradient flows to h only.

    The teacher distributions and the head parameters are constants, so the
    head receives no gradient from this loss.
    """
    z = as_matrix(z, "z")
    h = as_matrix(h, "h")
    if z.shape != h.shape:
        raise ShapeError(f"z {z.shape} and h {h.shape} must match")
    teacher_logits = z @ wc + bc
    student_logits = h @ wc + bc

    def log_sm(m):
        shifted = m - m.max(axis=1, keepdims=True)
        return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))

    log_p = log_sm(teacher_logits)
    log_q = log_sm(student_logits)
    p = np.exp(log_p)
    value = float(np.where(p > 0.0, p * (log_p - log_q), 0.0).sum())
    q = row_softmax(student_logits)
    dstudent = q - p  # per node; the loss is a sum over nodes
    dh = dstudent @ np.asarray(wc).T
    return LossOutput(value=value, grad=dh)
