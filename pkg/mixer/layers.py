# mixer/layers.py
#
# Parameterised building blocks shared by every mixing branch:
# linear, layer_norm, feed_forward and their initialisers.
#
# Parameters live in a flat {name: Tensor} dict; each layer reads the
# entries under its own prefix ("<prefix>.fc1.weight", ...).

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Mapping, Optional

import numpy as np
from scipy.stats import truncnorm

from autodiff.tensor import Tensor, add_bias, as_tensor, gelu, matmul, record
from mixer.roll import RollConfig
from utils.errors import ConfigError, ShapeError

Params = Mapping[str, Tensor]

INIT_STD = 0.02
BRANCH_KINDS = ("roll_time", "hermit_frequency", "channel", "token")


@dataclass(frozen=True)
class MixingBranchConfig:
    dim: int
    hidden: int
    kind: str
    roll: Optional[RollConfig] = None
    eps: float = 1e-6

    def __post_init__(self) -> None:
        if self.dim < 1 or self.hidden < 1:
            raise ConfigError(f"branch needs dim >= 1 and hidden >= 1, got {self.dim}/{self.hidden}")
        if self.kind not in BRANCH_KINDS:
            raise ConfigError(f"unknown branch kind {self.kind!r}")
        if self.kind == "roll_time" and self.roll is None:
            raise ConfigError("roll_time branch needs a RollConfig")


# -------------------------------------------------------------------------
# Initialisation
# -------------------------------------------------------------------------
def trunc_normal(rng: np.random.Generator, shape, std: float = INIT_STD, dtype=np.float32) -> np.ndarray:
    values = truncnorm.rvs(-2.0, 2.0, loc=0.0, scale=std, size=shape, random_state=rng)
    return np.asarray(values, dtype=dtype)


def init_linear(rng: np.random.Generator, d_in: int, d_out: int, prefix: str, dtype=np.float32) -> Dict[str, np.ndarray]:
    return {
        f"{prefix}.weight": trunc_normal(rng, (d_in, d_out), dtype=dtype),
        f"{prefix}.bias": np.zeros(d_out, dtype=dtype),
    }


def init_layer_norm(dim: int, prefix: str, dtype=np.float32) -> Dict[str, np.ndarray]:
    return {
        f"{prefix}.gain": np.ones(dim, dtype=dtype),
        f"{prefix}.bias": np.zeros(dim, dtype=dtype),
    }


def init_feed_forward(rng: np.random.Generator, cfg: MixingBranchConfig, prefix: str, dtype=np.float32) -> Dict[str, np.ndarray]:
    out = init_linear(rng, cfg.dim, cfg.hidden, f"{prefix}.fc1", dtype)
    out.update(init_linear(rng, cfg.hidden, cfg.dim, f"{prefix}.fc2", dtype))
    return out


# -------------------------------------------------------------------------
# Layers
# -------------------------------------------------------------------------
def linear(x: Tensor, params: Params, prefix: str) -> Tensor:
    return add_bias(matmul(x, params[f"{prefix}.weight"]), params[f"{prefix}.bias"])


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-6) -> Tensor:
    """Standardise the last axis (eps inside the square root), then affine."""
    x = as_tensor(x)
    gain = as_tensor(gain, dtype=x.dtype)
    bias = as_tensor(bias, dtype=x.dtype)
    width = x.shape[-1]
    if gain.shape != (width,) or bias.shape != (width,):
        raise ShapeError(f"layer_norm gain/bias {gain.shape}/{bias.shape} do not match last axis of {x.shape}")

    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    centered = xd - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    out = xhat * gain.data + bias.data

    def _backward(g: np.ndarray):
        g_gain = (g * xhat).reshape(-1, width).sum(axis=0)
        g_bias = g.reshape(-1, width).sum(axis=0)
        dxhat = g * gain.data
        dx = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return dx, g_gain, g_bias

    return record("layer_norm", (x, gain, bias), out.astype(x.dtype, copy=False), _backward)


def layer_norm_params(x: Tensor, params: Params, prefix: str, eps: float = 1e-6) -> Tensor:
    return layer_norm(x, params[f"{prefix}.gain"], params[f"{prefix}.bias"], eps)


def feed_forward(x: Tensor, params: Params, cfg: MixingBranchConfig, prefix: str) -> Tensor:
    """linear(dim -> hidden) -> GELU -> linear(hidden -> dim) along the last axis."""
    x = as_tensor(x)
    if x.shape[-1] != cfg.dim:
        raise ShapeError(f"feed_forward {prefix!r} expects last axis {cfg.dim}, got shape {x.shape}")
    h = gelu(linear(x, params, f"{prefix}.fc1"))
    return linear(h, params, f"{prefix}.fc2")
