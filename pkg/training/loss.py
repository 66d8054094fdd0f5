# training/loss.py
#
# Mean softmax cross-entropy as a single recorded op.

from __future__ import annotations

import numpy as np

from autodiff.tensor import Tensor, as_tensor, record
from utils.errors import DataError, ShapeError


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def check_labels(labels: np.ndarray, num_classes: int) -> np.ndarray:
    y = np.asarray(labels)
    if y.ndim != 1:
        raise ShapeError(f"labels must be 1-D, got shape {y.shape}")
    bad = np.flatnonzero((y < 0) | (y >= num_classes))
    if bad.size:
        i = int(bad[0])
        raise DataError(f"label {int(y[i])} at row {i} is outside 0..{num_classes - 1}")
    return y.astype(np.int64)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """-(1/B) sum_b log softmax(logits_b)[y_b], computed with max subtraction."""
    logits = as_tensor(logits)
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy expects (B, K) logits, got {logits.shape}")
    B, K = logits.shape
    y = check_labels(labels, K)
    if y.shape[0] != B:
        raise ShapeError(f"{y.shape[0]} labels for {B} logit rows")

    z = logits.data.astype(np.float64)
    z = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(B)
    loss = float(np.mean(log_norm - z[rows, y]))

    def _backward(g: np.ndarray):
        p = np.exp(z - log_norm[:, None])
        p[rows, y] -= 1.0
        return ((float(g) / B) * p,)

    return record("cross_entropy", (logits,), np.asarray(loss, dtype=logits.dtype), _backward)
