"""
Loss functions over Tensors.
All reductions skip masked positions and average over what is left.
"""

from typing import Optional

import numpy as np

from .tensor import Tensor, log_softmax, softmax, take_last, as_tensor
from ..exceptions import ShapeError, ValidationError


def _mask_like(targets_shape, mask: Optional[np.ndarray], dtype) -> np.ndarray:
    if mask is None:
        return np.ones(targets_shape, dtype=dtype)
    mask = np.asarray(mask)
    if mask.shape != tuple(targets_shape):
        raise ShapeError("mask shape mismatch", node="loss", shapes=[mask.shape, targets_shape])
    return mask.astype(dtype)


def _masked_mean(per_item: Tensor, weights: np.ndarray) -> Tensor:
    count = float(weights.sum())
    if count == 0.0:
        return (per_item * 0.0).sum()
    return (per_item * weights).sum() * (1.0 / count)


def cross_entropy(
    logits: Tensor,
    targets: np.ndarray,
    ignore_index: Optional[int] = None,
    mask: Optional[np.ndarray] = None,
) -> Tensor:
    """
    Mean token cross-entropy.

    Args:
        logits: (..., V) unnormalized scores
        targets: (...) integer ids in [0, V)
        ignore_index: Target id excluded from the mean (PAD)
        mask: Optional (...) 0/1 weights combined with ignore_index

    Raises:
        ValidationError: If a target id is outside the vocabulary
    """
    targets = np.asarray(targets, dtype=np.int64)
    vocab = logits.shape[-1]
    if targets.shape != logits.shape[:-1]:
        raise ShapeError(
            "targets must match logits without the class axis",
            node="cross_entropy", shapes=[logits.shape, targets.shape],
        )
    if targets.size and (targets.min() < 0 or targets.max() >= vocab):
        raise ValidationError(f"token id outside [0, {vocab})", field="targets")

    weights = _mask_like(targets.shape, mask, logits.dtype)
    if ignore_index is not None:
        weights = weights * (targets != ignore_index)
    picked = take_last(log_softmax(logits), targets)
    return -_masked_mean(picked, weights)


def soft_cross_entropy(
    logits: Tensor,
    soft_targets: np.ndarray,
    mask: Optional[np.ndarray] = None,
    temperature: float = 1.0,
) -> Tensor:
    """
    Distillation loss in cross-entropy form.

    T^2 * mean over unmasked rows of -sum_v q_v * log softmax(z / T)_v.
    With one-hot targets and T = 1 this equals ``cross_entropy`` exactly.
    """
    soft_targets = np.asarray(soft_targets, dtype=logits.dtype)
    if soft_targets.shape != logits.shape:
        raise ShapeError(
            "soft targets must match logits", node="soft_cross_entropy",
            shapes=[logits.shape, soft_targets.shape],
        )
    if temperature <= 0:
        raise ValidationError("temperature must be > 0", field="temperature")
    weights = _mask_like(logits.shape[:-1], mask, logits.dtype)
    scaled = logits if temperature == 1.0 else logits * (1.0 / temperature)
    per_row = -(log_softmax(scaled) * soft_targets).sum(axis=-1)
    loss = _masked_mean(per_row, weights)
    if temperature != 1.0:
        loss = loss * (temperature * temperature)
    return loss


def mse(pred: Tensor, target: np.ndarray, mask: Optional[np.ndarray] = None) -> Tensor:
    """Squared error averaged per row, then over unmasked rows."""
    target = as_tensor(np.asarray(target, dtype=pred.dtype), pred)
    if target.shape != pred.shape:
        raise ShapeError("target shape mismatch", node="mse", shapes=[pred.shape, target.shape])
    diff = pred - target
    if pred.ndim == 1:
        per_row = diff * diff
    else:
        per_row = (diff * diff).mean(axis=tuple(range(1, pred.ndim)))
    weights = _mask_like(per_row.shape, mask, pred.dtype)
    return _masked_mean(per_row, weights)


def entropy(logits: Tensor) -> Tensor:
    """Mean entropy of the categorical distributions along the last axis."""
    logp = log_softmax(logits)
    probs = softmax(logits)
    return -(probs * logp).sum(axis=-1).mean()
