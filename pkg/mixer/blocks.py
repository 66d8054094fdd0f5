"""
mixer/blocks.py - residual mixing branches and the per-variant block.

Every branch is x + f(layer_norm(x)) on (B, S, D) activations:

    channel_mixing           f = FF over D
    token_mixing             f = T . FF over S . T
    roll_time_mixing         f = FF over D after the RollBlock permutation
    hermit_frequency_mixing  f = irfft_D . T . FF over S . T . hfft_D

A block runs a token-slot branch then a channel-slot branch. The variant
decides which: RH = hermit_frequency + roll_time, H = hermit_frequency +
channel, R = token + roll_time, baseline = token + channel.
"""

from __future__ import annotations

from typing import List, Optional, Tuple

from autodiff.tensor import Tensor, add, as_tensor, transpose_last2
from config import ModelConfig
from mixer.layers import MixingBranchConfig, Params, feed_forward, layer_norm_params
from mixer.roll import RollConfig, roll
from spectral.ops import hfft_lastaxis, irfft_lastaxis
from utils.errors import ConfigError, ShapeError

# variant -> (token-slot branch, channel-slot branch)
VARIANT_BRANCHES = {
    "RH": ("hermit_frequency", "roll_time"),
    "H": ("hermit_frequency", "channel"),
    "R": ("token", "roll_time"),
    "baseline": ("token", "channel"),
}

BRANCH_NAMES = {
    "hermit_frequency": "frequency_mixing",
    "token": "token_mixing",
    "roll_time": "roll_time_mixing",
    "channel": "channel_mixing",
}


# ---------------------------------------------------------------------
# Branches
# ---------------------------------------------------------------------


def channel_mixing(x: Tensor, params: Params, cfg: MixingBranchConfig, prefix: str) -> Tensor:
    y = layer_norm_params(x, params, f"{prefix}.norm", cfg.eps)
    return add(x, feed_forward(y, params, cfg, f"{prefix}.ff"))


def token_mixing(x: Tensor, params: Params, cfg: MixingBranchConfig, prefix: str) -> Tensor:
    y = transpose_last2(layer_norm_params(x, params, f"{prefix}.norm", cfg.eps))
    y = feed_forward(y, params, cfg, f"{prefix}.ff")
    return add(x, transpose_last2(y))


def roll_time_mixing(x: Tensor, params: Params, cfg: MixingBranchConfig, prefix: str) -> Tensor:
    if cfg.roll is None:
        raise ConfigError(f"{prefix}: roll_time branch has no RollConfig")
    y = roll(layer_norm_params(x, params, f"{prefix}.norm", cfg.eps), cfg.roll)
    return add(x, feed_forward(y, params, cfg, f"{prefix}.ff"))


def hermit_frequency_mixing(x: Tensor, params: Params, cfg: MixingBranchConfig, prefix: str) -> Tensor:
    x = as_tensor(x)
    D = x.shape[-1]
    if D < 4:
        raise ShapeError(f"hermit_frequency_mixing needs D >= 4, got shape {x.shape}")
    y = hfft_lastaxis(layer_norm_params(x, params, f"{prefix}.norm", cfg.eps), D)
    y = transpose_last2(y)
    y = feed_forward(y, params, cfg, f"{prefix}.ff")
    y = transpose_last2(y)
    return add(x, irfft_lastaxis(y, D))


_APPLY = {
    "channel": channel_mixing,
    "token": token_mixing,
    "roll_time": roll_time_mixing,
    "hermit_frequency": hermit_frequency_mixing,
}


def apply_branch(x: Tensor, params: Params, cfg: MixingBranchConfig, prefix: str) -> Tensor:
    return _APPLY[cfg.kind](x, params, cfg, prefix)


# ---------------------------------------------------------------------
# Blocks
# ---------------------------------------------------------------------


def roll_config(cfg: ModelConfig, block_index: int) -> RollConfig:
    return RollConfig(
        alpha=block_index,
        model_depth=cfg.depth,
        C=cfg.roll_channels,
        C_a=cfg.roll_height_fold,
    )


def branch_plan(
    cfg: ModelConfig,
    block_index: int,
    variant: Optional[str] = None,
) -> List[Tuple[str, MixingBranchConfig]]:
    """[(parameter prefix, branch config)] for one block, in execution order."""
    if not 0 <= block_index < cfg.depth:
        raise ConfigError(f"block_index {block_index} out of range for depth {cfg.depth}")
    variant = variant or cfg.variant
    if variant not in VARIANT_BRANCHES:
        raise ConfigError(f"unknown variant {variant!r}")

    plan = []
    for kind in VARIANT_BRANCHES[variant]:
        if kind in ("hermit_frequency", "token"):
            bcfg = MixingBranchConfig(cfg.seq_len, cfg.token_hidden, kind, eps=cfg.layer_norm_eps)
        elif kind == "roll_time":
            bcfg = MixingBranchConfig(cfg.embed_dim, cfg.channel_hidden, kind,
                                      roll=roll_config(cfg, block_index), eps=cfg.layer_norm_eps)
        else:
            bcfg = MixingBranchConfig(cfg.embed_dim, cfg.channel_hidden, kind, eps=cfg.layer_norm_eps)
        plan.append((f"blocks.{block_index}.{BRANCH_NAMES[kind]}", bcfg))
    return plan


def mixer_block(
    x: Tensor,
    params: Params,
    cfg: ModelConfig,
    block_index: int,
    variant: Optional[str] = None,
) -> Tensor:
    for prefix, bcfg in branch_plan(cfg, block_index, variant):
        x = apply_branch(x, params, bcfg, prefix)
    return x


def rh_mixer_block(x: Tensor, params: Params, block_index: int, cfg: ModelConfig) -> Tensor:
    """Hermit-frequency branch (token slot) then roll-time branch (channel slot)."""
    return mixer_block(x, params, cfg, block_index, variant="RH")
