# frontend/patches.py
#
# (T_fixed, F) log-mel -> (S, patch_t * patch_f) non-overlapping patches.
# Token order is time-major: token s = f_idx * (T_fixed / patch_t) + t_idx,
# so consecutive tokens walk along time inside one frequency band.

from __future__ import annotations

import numpy as np

from autodiff.tensor import Tensor
from config import FrontendConfig
from frontend.features import MelSpec
from mixer.layers import Params, linear
from utils.errors import ShapeError


def extract_patches(values: np.ndarray, cfg: FrontendConfig) -> np.ndarray:
    v = np.asarray(values)
    if v.shape != (cfg.target_frames, cfg.mel_bins):
        raise ShapeError(
            f"extract_patches expects ({cfg.target_frames}, {cfg.mel_bins}) log-mel, got {v.shape}"
        )
    nt, nf = cfg.time_patches, cfg.freq_patches
    grid = v.reshape(nt, cfg.patch_t, nf, cfg.patch_f).transpose(2, 0, 1, 3)
    return np.ascontiguousarray(grid.reshape(nt * nf, cfg.patch_dim))


def patch_embed(mel: MelSpec, params: Params, cfg: FrontendConfig) -> Tensor:
    """Flatten patches and project them to (S, D) with patch_embed.weight/bias."""
    weight = params["patch_embed.weight"]
    if weight.shape != (cfg.patch_dim, cfg.embed_dim):
        raise ShapeError(
            f"patch_embed.weight is {weight.shape}, frontend needs ({cfg.patch_dim}, {cfg.embed_dim})"
        )
    patches = Tensor(extract_patches(mel.values, cfg), dtype=weight.dtype)
    return linear(patches, params, "patch_embed")
