"""
mixer/roll.py - the RollBlock permutation.

Activations (B, H, W) are viewed as (B, C, H//C_a, W*C_a//C). Four channel
groups of width g are rolled circularly:

    [0g:1g)  +step along the last axis
    [1g:2g)  -step along the last axis
    [2g:3g)  +step along the second-to-last axis
    [3g:4g)  -step along the second-to-last axis

with g = int(C/(1+alpha)) and step = model_depth - alpha. Slice bounds are
clamped to C, so for small alpha (4g > C) the trailing groups are short or
empty. Nothing is discarded: the op is a fixed permutation of the entries.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from autodiff.tensor import Tensor, as_tensor, record
from utils.errors import ConfigError, ShapeError


@dataclass(frozen=True)
class RollConfig:
    alpha: int
    model_depth: int
    C: int = 16
    C_a: int = 4

    def __post_init__(self) -> None:
        if self.C <= 0 or self.C_a <= 0 or self.C % self.C_a != 0:
            raise ConfigError(f"roll needs C divisible by C_a, got C={self.C} C_a={self.C_a}")
        if not 0 <= self.alpha < self.model_depth:
            raise ConfigError(f"roll needs 0 <= alpha < model_depth, got alpha={self.alpha} "
                              f"model_depth={self.model_depth}")

    @property
    def gamma(self) -> float:
        return 1.0 / (1.0 + self.alpha)

    @property
    def g(self) -> int:
        return int(self.gamma * self.C)

    @property
    def step(self) -> int:
        return self.model_depth - self.alpha

    def groups(self) -> List[Tuple[int, int, int, int]]:
        """(lo, hi, shift, axis) for every non-empty channel group."""
        g, s, C = self.g, self.step, self.C
        out = []
        for i, (shift, axis) in enumerate(((s, 3), (-s, 3), (s, 2), (-s, 2))):
            lo, hi = min(i * g, C), min((i + 1) * g, C)
            if lo < hi:
                out.append((lo, hi, shift, axis))
        return out


def folded_shape(shape: Tuple[int, ...], cfg: RollConfig) -> Tuple[int, int, int, int]:
    if len(shape) != 3:
        raise ShapeError(f"roll expects (B, H, W), got shape {shape}")
    B, H, W = shape
    if H % cfg.C_a != 0 or (W * cfg.C_a) % cfg.C != 0:
        raise ShapeError(f"roll needs H % C_a == 0 and (W*C_a) % C == 0; got H={H}, W={W}, "
                         f"C={cfg.C}, C_a={cfg.C_a}")
    return B, cfg.C, H // cfg.C_a, W * cfg.C_a // cfg.C


def _apply(x: np.ndarray, cfg: RollConfig, direction: int) -> np.ndarray:
    folded = folded_shape(x.shape, cfg)
    out = np.array(x).reshape(folded)
    for lo, hi, shift, axis in cfg.groups():
        out[:, lo:hi] = np.roll(out[:, lo:hi], direction * shift, axis=axis)
    return out.reshape(x.shape)


def roll_array(x: np.ndarray, cfg: RollConfig) -> np.ndarray:
    return _apply(np.asarray(x), cfg, 1)


def roll_inverse_array(x: np.ndarray, cfg: RollConfig) -> np.ndarray:
    return _apply(np.asarray(x), cfg, -1)


def roll(feat: Tensor, cfg: RollConfig) -> Tensor:
    feat = as_tensor(feat)

    def _backward(g: np.ndarray):
        return (roll_inverse_array(g, cfg),)

    return record("roll", (feat,), roll_array(feat.data, cfg), _backward)


def roll_inverse(feat: Tensor, cfg: RollConfig) -> Tensor:
    feat = as_tensor(feat)

    def _backward(g: np.ndarray):
        return (roll_array(g, cfg),)

    return record("roll_inverse", (feat,), roll_inverse_array(feat.data, cfg), _backward)
