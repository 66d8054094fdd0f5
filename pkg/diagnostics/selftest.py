"""
diagnostics/selftest.py - property suite behind `app.py selftest`.

Each property returns (passed, worst error). The suite prints one row per
property and is green only when every row passes. Transforms are reached
through their module (sfft.hfft, ...) so a patched implementation is what
gets checked.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Tuple

import numpy as np
import pandas as pd

from autodiff.gradcheck import check_gradients
from autodiff.tensor import Tensor, weighted_sum
from config import ModelConfig
from diagnostics import oracles
from mixer.blocks import (
    branch_plan,
    hermit_frequency_mixing,
    mixer_block,
    rh_mixer_block,
    roll_time_mixing,
)
from mixer.layers import feed_forward, layer_norm
from mixer.model import build_variant, model_forward, param_shapes, zero_branch_params
from mixer.roll import RollConfig, roll_array, roll_inverse_array
from spectral import fft as sfft
from training.loss import cross_entropy
from training.metrics import macro_auc
from utils.errors import RhMixerError
from utils.log import log_event

logger = logging.getLogger(__name__)

SPECTRAL_TOL = 1e-9
GRAD_TOL = 1e-3
SPECTRAL_SIZES = list(range(2, 65)) + [385, 600, 768]

# tiny float64 model used by the gradient and identity properties
GRAD_MODEL = ModelConfig(seq_len=8, embed_dim=16, depth=2, num_classes=3, patch_dim=4,
                         ff_expansion_channel=2.0, ff_expansion_token=0.5)


@dataclass(frozen=True)
class PropertyResult:
    name: str
    passed: bool
    worst: float
    seconds: float


# ---------------------------------------------------------------------
# Properties
# ---------------------------------------------------------------------


def prop_spectral_oracle(rng: np.random.Generator, trials: int = 3) -> Tuple[bool, float]:
    worst = 0.0
    for n in SPECTRAL_SIZES:
        m = n // 2 + 1
        for _ in range(trials):
            x = rng.standard_normal(n)
            y = rng.standard_normal(m) + 1j * rng.standard_normal(m)
            y[0] = y[0].real
            if n % 2 == 0:
                y[-1] = y[-1].real
            worst = max(
                worst,
                float(np.max(np.abs(sfft.rfft(x) - oracles.naive_rfft(x)))),
                float(np.max(np.abs(sfft.irfft(y, n) - oracles.naive_irfft(y, n)))),
                float(np.max(np.abs(sfft.hfft(y, n) - oracles.naive_hfft(y, n)))),
                float(np.max(np.abs(sfft.ihfft(x, n) - oracles.naive_ihfft(x, n)))),
            )
    return worst <= SPECTRAL_TOL, worst


def prop_spectral_inversion(rng: np.random.Generator, trials: int = 200) -> Tuple[bool, float]:
    worst = 0.0
    for _ in range(trials):
        n = int(rng.integers(2, 97))
        y = rng.standard_normal(n // 2 + 1)
        x = rng.standard_normal(n)
        worst = max(
            worst,
            float(np.max(np.abs(sfft.ihfft(sfft.hfft(y, n), n) - y))),
            float(np.max(np.abs(sfft.irfft(sfft.rfft(x), n) - x))),
        )
    return worst <= SPECTRAL_TOL, worst


def prop_hfft_realness(rng: np.random.Generator, trials: int = 50) -> Tuple[bool, float]:
    """Hermitian-consistent complex input gives a real output matching the oracle."""
    worst = 0.0
    for _ in range(trials):
        n = int(rng.integers(2, 65))
        m = n // 2 + 1
        y = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        y[0] = y[0].real
        if n % 2 == 0:
            y[-1] = y[-1].real
        out = sfft.hfft(y, n)
        if np.iscomplexobj(out):
            return False, float(np.max(np.abs(np.imag(out))))
        worst = max(worst, float(np.max(np.abs(out - oracles.naive_hfft(y, n)))))
    return worst <= SPECTRAL_TOL, worst


def prop_roll_oracle(rng: np.random.Generator) -> Tuple[bool, float]:
    worst = 0.0
    for depth in range(1, 13):
        for alpha in range(depth):
            cfg = RollConfig(alpha=alpha, model_depth=depth)
            x = rng.standard_normal((2, 8, 16))
            y = roll_array(x, cfg)
            worst = max(
                worst,
                float(np.max(np.abs(y - oracles.roll_oracle(x, cfg)))),
                float(np.max(np.abs(roll_inverse_array(y, cfg) - x))),
            )
            # same multiset, hence the same L2 norm
            if not np.array_equal(np.sort(y, axis=None), np.sort(x, axis=None)):
                return False, math.inf
    return worst == 0.0, worst


def _grad_model_params(rng: np.random.Generator) -> Dict[str, np.ndarray]:
    model = build_variant(GRAD_MODEL, seed=int(rng.integers(0, 2**31)), dtype=np.float64)
    arrays = {}
    for name, shape in param_shapes(GRAD_MODEL).items():
        # random gains and biases so no gradient path is trivially zero
        arrays[name] = model.params[name].data + 0.1 * rng.standard_normal(shape)
    return arrays


def prop_gradients(rng: np.random.Generator, max_entries: int = 16) -> Tuple[bool, float]:
    cfg = GRAD_MODEL
    B, S, D = 2, cfg.seq_len, cfg.embed_dim
    params = _grad_model_params(rng)
    x = rng.standard_normal((B, S, D))
    w = rng.standard_normal((B, S, D))

    def block_params(prefix: str) -> Dict[str, np.ndarray]:
        return {k: v for k, v in params.items() if k.startswith(prefix + ".")}

    cases: List[Tuple[str, Callable, Dict[str, np.ndarray]]] = []

    cases.append(("layer_norm", lambda t: weighted_sum(layer_norm(t["x"], t["gain"], t["bias"]), w),
                  {"x": x, "gain": 1.0 + 0.1 * rng.standard_normal(D), "bias": 0.1 * rng.standard_normal(D)}))

    (tok_prefix, tok_cfg), (ch_prefix, ch_cfg) = branch_plan(cfg, 1, "RH")
    cases.append(("feed_forward", lambda t: weighted_sum(feed_forward(t["x"], t, ch_cfg, f"{ch_prefix}.ff"), w),
                  dict({"x": x}, **{k: v for k, v in block_params(ch_prefix).items() if ".ff." in k})))
    cases.append(("roll_time_mixing", lambda t: weighted_sum(roll_time_mixing(t["x"], t, ch_cfg, ch_prefix), w),
                  dict({"x": x}, **block_params(ch_prefix))))
    cases.append(("hermit_frequency_mixing",
                  lambda t: weighted_sum(hermit_frequency_mixing(t["x"], t, tok_cfg, tok_prefix), w),
                  dict({"x": x}, **block_params(tok_prefix))))
    cases.append(("rh_mixer_block", lambda t: weighted_sum(rh_mixer_block(t["x"], t, 1, cfg), w),
                  dict({"x": x}, **block_params("blocks.1"))))

    head_w = rng.standard_normal((B, cfg.num_classes))
    cases.append(("model", lambda t: weighted_sum(model_forward(t["x"], {k: t[k] for k in params}, cfg), head_w),
                  dict({"x": x}, **params)))

    worst = 0.0
    for name, fn, inputs in cases:
        errors = check_gradients(fn, inputs, max_entries=max_entries, seed=int(rng.integers(0, 2**31)))
        case_worst = max(errors.values())
        logger.debug("gradcheck %s: %.3e", name, case_worst)
        worst = max(worst, case_worst)
    return worst <= GRAD_TOL, worst


def prop_auc_oracle(rng: np.random.Generator, trials: int = 50) -> Tuple[bool, float]:
    worst = 0.0
    for _ in range(trials):
        n = int(rng.integers(4, 201))
        K = int(rng.integers(2, 5))
        labels = rng.integers(0, K, size=n)
        # coarse scores force ties
        scores = rng.integers(0, 5, size=(n, K)).astype(np.float64)
        worst = max(worst, abs(macro_auc(scores, labels) - oracles.pairwise_macro_auc(scores, labels)))
    return worst == 0.0, worst


def prop_uniform_cross_entropy(rng: np.random.Generator) -> Tuple[bool, float]:
    worst = 0.0
    for K in (2, 4, 10, 35):
        logits = np.full((3, K), float(rng.standard_normal()))
        loss = cross_entropy(Tensor(logits, dtype=np.float64), np.arange(3) % K).item()
        worst = max(worst, abs(loss - math.log(K)))
    return worst <= 1e-12, worst


def prop_residual_identity(rng: np.random.Generator) -> Tuple[bool, float]:
    """Zeroed branch parameters make the block stack the identity on tokens."""
    worst = 0.0
    for variant in ("RH", "H", "R", "baseline"):
        cfg = replace(GRAD_MODEL, variant=variant)
        model = build_variant(cfg, seed=0, dtype=np.float64)
        zero_branch_params(model)
        x = Tensor(rng.standard_normal((2, cfg.seq_len, cfg.embed_dim)), dtype=np.float64)
        y = x
        for i in range(cfg.depth):
            y = mixer_block(y, model.params, cfg, i)
        worst = max(worst, float(np.max(np.abs(y.data - x.data))))
    return worst == 0.0, worst


PROPERTIES: List[Tuple[str, Callable[[np.random.Generator], Tuple[bool, float]]]] = [
    ("spectral_vs_naive_dft", prop_spectral_oracle),
    ("spectral_inversion", prop_spectral_inversion),
    ("hfft_realness", prop_hfft_realness),
    ("roll_permutation", prop_roll_oracle),
    ("gradient_audit", prop_gradients),
    ("auc_pairwise_oracle", prop_auc_oracle),
    ("cross_entropy_uniform", prop_uniform_cross_entropy),
    ("residual_identity", prop_residual_identity),
]


def run_selftest(seed: int = 0) -> List[PropertyResult]:
    results: List[PropertyResult] = []
    for name, prop in PROPERTIES:
        rng = np.random.default_rng(seed)
        t0 = time.perf_counter()
        try:
            passed, worst = prop(rng)
        except (RhMixerError, FloatingPointError, ValueError) as e:
            logger.error("%s raised %s: %s", name, type(e).__name__, e)
            passed, worst = False, math.inf
        results.append(PropertyResult(name, bool(passed), float(worst), time.perf_counter() - t0))
    return results


def results_table(results: List[PropertyResult]) -> pd.DataFrame:
    return pd.DataFrame([
        {"property": r.name, "status": "PASS" if r.passed else "FAIL",
         "worst_error": f"{r.worst:.3e}", "seconds": round(r.seconds, 2)}
        for r in results
    ])


def main(seed: int = 0) -> int:
    results = run_selftest(seed)
    print(results_table(results).to_string(index=False))
    failed = [r for r in results if not r.passed]
    log_event("SELFTEST", "selftest finished", {
        "passed": len(results) - len(failed),
        "failed": [{"property": r.name, "worst": r.worst} for r in failed],
    })
    for r in failed:
        logger.error("FAILED %s (worst error %.3e)", r.name, r.worst)
    return 1 if failed else 0
