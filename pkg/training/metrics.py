"""
training/metrics.py - accuracy, macro one-vs-rest ROC AUC and the report
record written to the metrics stream.

AUC per class is the Mann-Whitney statistic over tie-averaged ranks, so a
tied (positive, negative) pair contributes 1/2. A class with no positives
or no negatives in the split has no ROC curve and is left out of the macro
average with a warning.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy.stats import rankdata

from utils.errors import DataError, ShapeError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MetricsReport:
    split: str
    epoch: Optional[int]
    acc: float
    auc: float
    loss: float
    n: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.acc <= 1.0 or not 0.0 <= self.auc <= 1.0:
            raise ValueError(f"metrics out of range: acc={self.acc} auc={self.auc}")

    def to_record(self, **extra: Any) -> Dict[str, Any]:
        rec = asdict(self)
        rec.update(extra)
        return rec

    @property
    def selection_key(self) -> Tuple[float, float]:
        """Validation ACC first, AUC as tiebreak."""
        return (self.acc, self.auc)


def accuracy(scores: np.ndarray, labels: np.ndarray) -> float:
    s = np.asarray(scores)
    y = np.asarray(labels)
    if s.ndim != 2 or s.shape[0] != y.shape[0]:
        raise ShapeError(f"accuracy expects (N, K) scores for {y.shape[0]} labels, got {s.shape}")
    if y.size == 0:
        raise DataError("accuracy of an empty split is undefined")
    return float(np.mean(np.argmax(s, axis=1) == y))


def binary_auc(scores: np.ndarray, positives: np.ndarray) -> float:
    """ROC area for one class via rank statistics; ties count 1/2."""
    s = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(positives, dtype=bool)
    n_pos = int(pos.sum())
    n_neg = int(pos.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUC needs at least one positive and one negative sample")
    ranks = rankdata(s, method="average")
    u = float(ranks[pos].sum()) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def macro_auc(scores: np.ndarray, labels: np.ndarray, num_classes: Optional[int] = None) -> float:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    K = num_classes or s.shape[1]
    aucs, skipped = [], []
    for k in range(K):
        pos = y == k
        if pos.all() or not pos.any():
            skipped.append(k)
            continue
        aucs.append(binary_auc(s[:, k], pos))
    if skipped:
        logger.warning("AUC: classes %s have no positives or no negatives in this split; excluded", skipped)
    if not aucs:
        logger.warning("AUC undefined for a single-class split; reporting 0.5")
        return 0.5
    return float(np.mean(aucs))


def build_report(
    split: str,
    epoch: Optional[int],
    scores: np.ndarray,
    labels: np.ndarray,
    loss: float,
) -> MetricsReport:
    return MetricsReport(
        split=split,
        epoch=epoch,
        acc=accuracy(scores, labels),
        auc=macro_auc(scores, labels),
        loss=float(loss),
        n=int(np.asarray(labels).shape[0]),
    )
