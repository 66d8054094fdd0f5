"""
mixer/model.py - model assembly.

    patches (B, S, P) --patch_embed--> tokens (B, S, D)
    tokens  --depth x mixer_block--> (B, S, D)
            --layer_norm--> mean over S --head--> logits (B, K)

No class / distillation tokens and no positional embedding anywhere; the
parameter inventory is exactly patch_embed.*, blocks.<i>.<branch>.*,
norm.* and head.*.
"""

from __future__ import annotations

from collections import OrderedDict
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

import numpy as np

from autodiff.tensor import Tensor, add_bias, as_tensor, matmul, reduce
from config import ModelConfig
from mixer.blocks import branch_plan, mixer_block
from mixer.layers import (
    Params,
    init_feed_forward,
    init_layer_norm,
    init_linear,
    layer_norm_params,
    linear,
)
from utils.errors import ConfigError, ShapeError


def param_shapes(cfg: ModelConfig) -> "OrderedDict[str, Tuple[int, ...]]":
    """Every parameter the config needs, in canonical order."""
    shapes: "OrderedDict[str, Tuple[int, ...]]" = OrderedDict()
    shapes["patch_embed.weight"] = (cfg.patch_dim, cfg.embed_dim)
    shapes["patch_embed.bias"] = (cfg.embed_dim,)
    for i in range(cfg.depth):
        for prefix, bcfg in branch_plan(cfg, i):
            shapes[f"{prefix}.norm.gain"] = (cfg.embed_dim,)
            shapes[f"{prefix}.norm.bias"] = (cfg.embed_dim,)
            shapes[f"{prefix}.ff.fc1.weight"] = (bcfg.dim, bcfg.hidden)
            shapes[f"{prefix}.ff.fc1.bias"] = (bcfg.hidden,)
            shapes[f"{prefix}.ff.fc2.weight"] = (bcfg.hidden, bcfg.dim)
            shapes[f"{prefix}.ff.fc2.bias"] = (bcfg.dim,)
    shapes["norm.gain"] = (cfg.embed_dim,)
    shapes["norm.bias"] = (cfg.embed_dim,)
    shapes["head.weight"] = (cfg.embed_dim, cfg.num_classes)
    shapes["head.bias"] = (cfg.num_classes,)
    return shapes


def init_params(cfg: ModelConfig, seed: int = 0, dtype=np.float32) -> Dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    arrays: Dict[str, np.ndarray] = {}
    arrays.update(init_linear(rng, cfg.patch_dim, cfg.embed_dim, "patch_embed", dtype))
    for i in range(cfg.depth):
        for prefix, bcfg in branch_plan(cfg, i):
            arrays.update(init_layer_norm(cfg.embed_dim, f"{prefix}.norm", dtype))
            arrays.update(init_feed_forward(rng, bcfg, f"{prefix}.ff", dtype))
    arrays.update(init_layer_norm(cfg.embed_dim, "norm", dtype))
    arrays.update(init_linear(rng, cfg.embed_dim, cfg.num_classes, "head", dtype))
    return {name: arrays[name] for name in param_shapes(cfg)}


def check_assembly(params: Mapping[str, Tensor], cfg: ModelConfig) -> None:
    expected = param_shapes(cfg)
    missing = [n for n in expected if n not in params]
    extra = sorted(set(params) - set(expected))
    if missing or extra:
        raise ConfigError(
            f"assembly error for variant {cfg.variant}: missing {missing[:5]}"
            f"{'...' if len(missing) > 5 else ''}, unexpected {extra[:5]}"
        )
    for name, shape in expected.items():
        if tuple(params[name].shape) != shape:
            raise ConfigError(f"assembly error: {name} has shape {tuple(params[name].shape)}, expected {shape}")


def embed_patches(patches: Tensor, params: Params) -> Tensor:
    return linear(as_tensor(patches), params, "patch_embed")


def model_forward(tokens: Tensor, params: Params, cfg: ModelConfig) -> Tensor:
    """(B, S, D) tokens -> (B, num_classes) logits."""
    tokens = as_tensor(tokens)
    if tokens.ndim != 3 or tokens.shape[1:] != (cfg.seq_len, cfg.embed_dim):
        raise ShapeError(f"model expects tokens (B, {cfg.seq_len}, {cfg.embed_dim}), got {tokens.shape}")
    check_assembly(params, cfg)
    x = tokens
    for i in range(cfg.depth):
        x = mixer_block(x, params, cfg, i)
    x = layer_norm_params(x, params, "norm", cfg.layer_norm_eps)
    pooled = reduce(x, 1, "mean")
    return add_bias(matmul(pooled, params["head.weight"]), params["head.bias"])


def build_variant(cfg: ModelConfig, seed: int = 0, dtype=np.float32) -> "Model":
    """Freshly initialised model for cfg.variant (RH, H, R or baseline)."""
    return Model.from_arrays(cfg, init_params(cfg, seed, dtype))


class Model:
    """Config plus a flat parameter dict; forward maps patches to logits."""

    def __init__(self, cfg: ModelConfig, params: Mapping[str, Tensor]) -> None:
        check_assembly(params, cfg)
        self.cfg = cfg
        self.params: "OrderedDict[str, Tensor]" = OrderedDict(
            (name, params[name]) for name in param_shapes(cfg)
        )

    @classmethod
    def from_arrays(cls, cfg: ModelConfig, arrays: Mapping[str, np.ndarray]) -> "Model":
        params = {
            name: Tensor(np.array(arr), requires_grad=True, name=name)
            for name, arr in arrays.items()
        }
        return cls(cfg, params)

    @property
    def dtype(self) -> np.dtype:
        return self.params["head.weight"].dtype

    def parameters(self) -> List[Tensor]:
        return list(self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def arrays(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((name, p.data.copy()) for name, p in self.params.items())

    def load_arrays(self, arrays: Mapping[str, np.ndarray]) -> None:
        for name, p in self.params.items():
            src = np.asarray(arrays[name])
            if src.shape != p.shape:
                raise ShapeError(f"{name}: cannot load shape {src.shape} into {p.shape}")
            p.data = np.array(src, dtype=p.dtype)

    def tokens(self, patches) -> Tensor:
        return embed_patches(Tensor(np.asarray(patches), dtype=self.dtype), self.params)

    def forward(self, patches) -> Tensor:
        """(B, S, patch_dim) patches -> (B, num_classes) logits."""
        return model_forward(self.tokens(patches), self.params, self.cfg)

    __call__ = forward

    def inventory(self) -> List[str]:
        return list(self.params)

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.params.values()))


def zero_branch_params(model: Model, names: Optional[Iterable[str]] = None) -> None:
    """Zero every blocks.* parameter (or the given names); residuals become identities."""
    for name in names or [n for n in model.params if n.startswith("blocks.")]:
        model.params[name].data = np.zeros_like(model.params[name].data)
