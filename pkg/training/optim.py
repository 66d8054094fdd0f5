# training/optim.py
#
# Adam (beta1 0.9, beta2 0.999, eps 1e-8) with decoupled weight decay, and
# the per-epoch learning-rate schedule: constant lr0 before
# decay_start_epoch, then lr0 * decay_factor ** (epoch - decay_start_epoch + 1).

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

import numpy as np

from autodiff.tensor import Tensor
from config import TrainConfig
from utils.errors import StateError

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


@dataclass
class AdamState:
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def zeros_like(cls, params: Mapping[str, Tensor]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p.data) for k, p in params.items()},
            v={k: np.zeros_like(p.data) for k, p in params.items()},
        )

    def check(self, params: Mapping[str, Tensor]) -> None:
        for k, p in params.items():
            for slot, moments in (("m", self.m), ("v", self.v)):
                if k not in moments:
                    raise StateError(f"optimizer state has no {slot} moment for {k}")
                if moments[k].shape != p.shape:
                    raise StateError(
                        f"optimizer {slot} moment for {k} is {moments[k].shape}, parameter is {p.shape}"
                    )


def adam_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, Optional[np.ndarray]],
    state: AdamState,
    lr: float,
    weight_decay: float = 0.0,
) -> None:
    """In-place update of every parameter; a missing gradient counts as zero."""
    state.check(params)
    state.step += 1
    t = state.step
    bc1 = 1.0 - BETA1 ** t
    bc2 = 1.0 - BETA2 ** t

    for k, p in params.items():
        g = grads.get(k)
        g = np.zeros_like(p.data) if g is None else np.asarray(g, dtype=p.dtype)
        if g.shape != p.shape:
            raise StateError(f"gradient for {k} is {g.shape}, parameter is {p.shape}")
        m = state.m[k] = BETA1 * state.m[k] + (1.0 - BETA1) * g
        v = state.v[k] = BETA2 * state.v[k] + (1.0 - BETA2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + EPS)
        new = p.data - lr * update
        if weight_decay:
            new = new - lr * weight_decay * p.data
        p.data = new.astype(p.dtype, copy=False)


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    if epoch < cfg.decay_start_epoch:
        return cfg.lr0
    return cfg.lr0 * cfg.decay_factor ** (epoch - cfg.decay_start_epoch + 1)
