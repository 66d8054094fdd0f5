# diagnostics/oracles.py
#
# Slow, obviously-correct reference constructions used by the selftest and
# the test suite. None of them calls the fast code paths they check.

from __future__ import annotations

import numpy as np

from mixer.roll import RollConfig
from spectral.fft import dft_naive
from utils.errors import DataError


# -------------------------------------------------------------------------
# Spectral
# -------------------------------------------------------------------------
def hermitian_extension_loop(y: np.ndarray, n: int) -> np.ndarray:
    """Full length-n spectrum from a 1-D half-spectrum, element by element."""
    m = n // 2 + 1
    half = np.zeros(m, dtype=np.complex128)
    y = np.asarray(y, dtype=np.complex128)
    half[:min(m, y.size)] = y[:m]
    full = np.zeros(n, dtype=np.complex128)
    for k in range(n):
        if k < m:
            full[k] = half[k]
        else:
            full[k] = np.conj(half[n - k])
    full[0] = full[0].real
    if n % 2 == 0:
        full[n // 2] = full[n // 2].real
    return full


def naive_rfft(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return dft_naive(x, -1)[: x.size // 2 + 1]


def naive_irfft(y: np.ndarray, n: int) -> np.ndarray:
    return (dft_naive(hermitian_extension_loop(y, n), 1) / n).real


def naive_hfft(y: np.ndarray, n: int) -> np.ndarray:
    return dft_naive(hermitian_extension_loop(y, n), -1).real


def naive_ihfft(z: np.ndarray, n: int) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    return dft_naive(z, 1)[: n // 2 + 1] / n


# -------------------------------------------------------------------------
# Roll
# -------------------------------------------------------------------------
def roll_oracle(x: np.ndarray, cfg: RollConfig) -> np.ndarray:
    """
    Per-element index permutation. Channel c of the (B, C, H/C_a, W*C_a/C)
    view belongs to group c // g when c < 4g; groups 0/1 move along the
    last axis by +step/-step, groups 2/3 along the third axis.
    """
    x = np.asarray(x)
    B, H, W = x.shape
    C, Ca = cfg.C, cfg.C_a
    Hf, Wf = H // Ca, W * Ca // C
    g = int(C / (1 + cfg.alpha))
    step = cfg.model_depth - cfg.alpha
    out = np.empty_like(x)
    src = x.reshape(-1)
    dst = out.reshape(-1)
    for flat in range(x.size):
        b, c, h, w = np.unravel_index(flat, (B, C, Hf, Wf))
        group = c // g if g > 0 and c < 4 * g else None
        if group == 0:
            w = (w - step) % Wf
        elif group == 1:
            w = (w + step) % Wf
        elif group == 2:
            h = (h - step) % Hf
        elif group == 3:
            h = (h + step) % Hf
        dst[flat] = src[np.ravel_multi_index((b, c, h, w), (B, C, Hf, Wf))]
    return out


# -------------------------------------------------------------------------
# Metrics
# -------------------------------------------------------------------------
def pairwise_auc(scores: np.ndarray, positives: np.ndarray) -> float:
    """Fraction of (positive, negative) pairs ordered correctly; ties 1/2."""
    s = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(positives, dtype=bool)
    sp, sn = s[pos], s[~pos]
    if sp.size == 0 or sn.size == 0:
        raise DataError("AUC needs at least one positive and one negative sample")
    wins = 0.0
    for a in sp:
        for b in sn:
            if a > b:
                wins += 1.0
            elif a == b:
                wins += 0.5
    return wins / (sp.size * sn.size)


def pairwise_macro_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    aucs = [pairwise_auc(s[:, k], y == k) for k in range(s.shape[1]) if 0 < (y == k).sum() < y.size]
    return float(np.mean(aucs)) if aucs else 0.5
