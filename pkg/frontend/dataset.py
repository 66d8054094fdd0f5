"""
frontend/dataset.py - turns manifest rows into model-ready patch arrays.

FeatureBank caches raw log-mels per path so a k-fold run or a variant sweep
computes every spectrogram once. Normalisation statistics are fitted on
the training rows only and applied to every split.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np
import pandas as pd

from config import FrontendConfig
from frontend.features import MelSpec, Normalizer, fix_length, log_mel
from frontend.patches import extract_patches
from frontend.wav import AudioClip, load_wav
from utils.errors import DataError

logger = logging.getLogger(__name__)


@dataclass
class SplitArrays:
    patches: np.ndarray  # (N, S, patch_dim)
    labels: np.ndarray   # (N,) int64
    paths: List[str]

    def __len__(self) -> int:
        return int(self.labels.shape[0])


def clip_patches(mel: MelSpec, cfg: FrontendConfig, normalizer: Normalizer) -> np.ndarray:
    """normalise -> fix_length -> (S, patch_dim) patches."""
    fixed = fix_length(normalizer.apply(mel), cfg.target_frames)
    return extract_patches(fixed.values, cfg)


class FeatureBank:
    def __init__(self, cfg: FrontendConfig) -> None:
        self.cfg = cfg
        self._mels: Dict[str, MelSpec] = {}

    def __len__(self) -> int:
        return len(self._mels)

    def mel(self, path: str) -> MelSpec:
        if path not in self._mels:
            self._mels[path] = log_mel(load_wav(path), self.cfg)
        return self._mels[path]

    def clip_mel(self, clip: AudioClip) -> MelSpec:
        return log_mel(clip, self.cfg)

    def fit_normalizer(self, rows: pd.DataFrame) -> Normalizer:
        if len(rows) == 0:
            raise DataError("cannot fit normalization statistics: the training split is empty")
        norm = Normalizer.fit(self.mel(p) for p in rows["path"])
        logger.info("Normalizer fitted on %d clips: mean=%.4f std=%.4f", len(rows), norm.mean, norm.std)
        return norm

    def arrays(self, rows: pd.DataFrame, normalizer: Normalizer, split: Optional[str] = None) -> SplitArrays:
        if len(rows) == 0:
            raise DataError(f"split {split or '?'} has no rows")
        paths = rows["path"].tolist()
        patches = np.stack([clip_patches(self.mel(p), self.cfg, normalizer) for p in paths])
        labels = rows["label"].to_numpy(dtype=np.int64)
        return SplitArrays(patches=patches, labels=labels, paths=paths)


def build_splits(
    bank: FeatureBank,
    groups: Mapping[str, pd.DataFrame],
) -> Tuple[Dict[str, SplitArrays], Normalizer]:
    """
    Fit normalisation on groups["train"] and turn every non-empty group into
    patch arrays. Empty evaluation groups are dropped; an empty training
    group is an error.
    """
    train_rows = groups.get("train")
    if train_rows is None or len(train_rows) == 0:
        raise DataError("the training split is empty")
    normalizer = bank.fit_normalizer(train_rows)
    arrays = {name: bank.arrays(rows, normalizer, name) for name, rows in groups.items() if len(rows)}
    return arrays, normalizer
