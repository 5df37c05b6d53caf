"""Cross-entropy and clustering losses as differentiable graphs."""
from __future__ import annotations

import numpy as np

from ..numcore import Tensor, ops


def _onehot(labels: np.ndarray, C: int, dtype) -> np.ndarray:
    labels = np.asarray(labels).reshape(-1)
    if labels.size and (labels.min() < 0 or labels.max() >= C):
        raise ValueError(f"labels must lie in [0, {C})")
    out = np.zeros((labels.size, C), dtype=dtype)
    out[np.arange(labels.size), labels] = 1
    return out


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean over pixels of -log softmax(logits)[label]; logits (..., C)."""
    C = logits.shape[-1]
    flat = ops.reshape(logits, (-1, C))
    if flat.shape[0] != np.size(labels):
        raise ValueError(f"{flat.shape[0]} logit rows but {np.size(labels)} labels")
    picked = ops.log_softmax(flat, axis=1) * _onehot(labels, C, logits.dtype)
    return ops.sum(picked) * (-1.0 / flat.shape[0])


def l2_normalize(z: Tensor) -> Tensor:
    """Rows of z (..., d) scaled to unit length."""
    sq = z.data.astype(np.float64)
    if np.any((sq * sq).sum(axis=-1) == 0):
        raise ValueError("zero-norm feature has no cosine distance")
    norm2 = ops.sum_squares(z, axis=-1)
    inv = ops.power(ops.reshape(norm2, norm2.shape + (1,)), -0.5)
    return z * inv


def dc_loss(z: Tensor, labels: np.ndarray, centroids: np.ndarray) -> Tensor:
    """Mean over pixels of -log softmax(-cosdist(z, mu))[label].

    ``z`` (..., d) is differentiable; ``centroids`` (K, d) are constants.
    """
    mu = np.asarray(centroids, dtype=np.float64)
    norms = np.linalg.norm(mu, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("zero-norm centroid has no cosine distance")
    mu = (mu / norms).astype(z.dtype)
    d = z.shape[-1]
    zn = l2_normalize(ops.reshape(z, (-1, d)))
    # -cosdist = cos - 1; the constant shift does not change the softmax but
    # keeps the logits literally equal to negative distances
    logits = zn @ mu.T - 1.0
    return cross_entropy(logits, labels)


def picie_losses(z1: Tensor, z2: Tensor, y1, y2, mu1, mu2) -> tuple[Tensor, Tensor, Tensor]:
    """(within, cross, total) two-view clustering losses."""
    within = dc_loss(z1, y1, mu1) + dc_loss(z2, y2, mu2)
    cross = dc_loss(z1, y2, mu2) + dc_loss(z2, y1, mu1)
    return within, cross, within + cross
