"""
frontend/features.py - log-mel spectrogram pipeline.

    clip -> stft (Hann, reflect padding) -> power -> mel filterbank
         -> log(x + 1e-6) -> per-dataset standardisation -> fix_length

Standardisation happens before fix_length so that zero padding is neutral
in the normalised domain.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable

import numpy as np
from scipy.signal import get_window

from config import FrontendConfig
from frontend.wav import AudioClip, resample_linear
from spectral.fft import rfft
from utils.errors import ConfigError, DataError, InputTooShortError

LOG_FLOOR = 1e-6


@dataclass(frozen=True)
class MelSpec:
    values: np.ndarray  # (T, F)
    normalized: bool = False

    def __post_init__(self) -> None:
        v = np.asarray(self.values)
        if v.ndim != 2 or v.shape[0] == 0 or v.shape[1] == 0:
            raise DataError(f"MelSpec needs a non-empty (T, F) matrix, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DataError("MelSpec contains non-finite values")

    @property
    def frames(self) -> int:
        return int(self.values.shape[0])

    @property
    def mel_bins(self) -> int:
        return int(self.values.shape[1])


# ---------------------------------------------------------------------
# STFT
# ---------------------------------------------------------------------


def num_frames(length: int, cfg: FrontendConfig) -> int:
    padded = length + 2 * (cfg.window_len // 2)
    return 1 + (padded - cfg.window_len) // cfg.hop_len


def stft(clip: AudioClip, cfg: FrontendConfig) -> np.ndarray:
    """(T, n_fft//2 + 1) complex frames; frame t = rfft(hann * segment_t, n_fft)."""
    x = np.asarray(clip.samples, dtype=np.float64)
    pad = cfg.window_len // 2
    if len(x) <= pad or len(x) + 2 * pad < cfg.window_len:
        raise InputTooShortError(
            f"clip of {len(x)} samples is shorter than one window ({cfg.window_len}) after padding"
        )
    padded = np.pad(x, pad, mode="reflect")
    T = 1 + (len(padded) - cfg.window_len) // cfg.hop_len

    frames = np.lib.stride_tricks.sliding_window_view(padded, cfg.window_len)[::cfg.hop_len][:T]
    window = get_window("hann", cfg.window_len, fftbins=True)
    buf = np.zeros((T, cfg.n_fft))
    buf[:, :cfg.window_len] = frames * window
    return rfft(buf)


# ---------------------------------------------------------------------
# Mel filterbank
# ---------------------------------------------------------------------


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=16)
def _filterbank(sample_rate: int, n_fft: int, mel_bins: int, fmin: float, fmax: float) -> np.ndarray:
    if not 0.0 <= fmin < fmax <= sample_rate / 2.0:
        raise ConfigError(f"mel filterbank needs 0 <= fmin < fmax <= sample_rate/2, got "
                          f"fmin={fmin} fmax={fmax} sample_rate={sample_rate}")
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), mel_bins + 2))
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lower) / (center - lower)
    falling = (upper - freqs) / (upper - center)
    fb = np.maximum(0.0, np.minimum(rising, falling))

    empty = np.flatnonzero(fb.sum(axis=1) <= 0.0)
    if empty.size:
        raise ConfigError(
            f"mel filters {empty.tolist()[:8]} cover no FFT bin; raise n_fft or lower mel_bins"
        )
    fb.setflags(write=False)
    return fb


def mel_filterbank(cfg: FrontendConfig) -> np.ndarray:
    """(mel_bins, n_fft//2 + 1) triangular filters, peak 1, HTK mel scale."""
    return _filterbank(cfg.sample_rate, cfg.n_fft, cfg.mel_bins, float(cfg.fmin), float(cfg.fmax))


def mel_project(frames: np.ndarray, cfg: FrontendConfig) -> MelSpec:
    power = np.abs(np.asarray(frames)) ** 2
    return MelSpec(np.log(power @ mel_filterbank(cfg).T + LOG_FLOOR))


def log_mel(clip: AudioClip, cfg: FrontendConfig) -> MelSpec:
    return mel_project(stft(resample_linear(clip, cfg.sample_rate), cfg), cfg)


# ---------------------------------------------------------------------
# Normalisation and framing
# ---------------------------------------------------------------------


@dataclass(frozen=True)
class Normalizer:
    mean: float
    std: float

    @classmethod
    def fit(cls, mels: Iterable[MelSpec]) -> "Normalizer":
        total, total_sq, count = 0.0, 0.0, 0
        for mel in mels:
            if mel.normalized:
                raise DataError("normalizer must be fitted on raw log-mel values")
            v = np.asarray(mel.values, dtype=np.float64)
            total += float(v.sum())
            total_sq += float((v * v).sum())
            count += v.size
        if count == 0:
            raise DataError("cannot fit normalizer on an empty split")
        mean = total / count
        var = max(total_sq / count - mean * mean, 0.0)
        std = float(np.sqrt(var))
        return cls(mean=float(mean), std=std if std > 0.0 else 1.0)

    def apply(self, mel: MelSpec) -> MelSpec:
        if mel.normalized:
            raise DataError("normalization already applied to this spectrogram")
        return MelSpec((mel.values - self.mean) / self.std, normalized=True)

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std}


def fix_length(mel: MelSpec, target_frames: int) -> MelSpec:
    """Truncate or zero-pad the tail to exactly target_frames rows."""
    if target_frames <= 0:
        raise ConfigError(f"target_frames must be positive, got {target_frames}")
    v = mel.values
    if mel.frames >= target_frames:
        out = v[:target_frames]
    else:
        out = np.concatenate([v, np.zeros((target_frames - mel.frames, mel.mel_bins))], axis=0)
    return MelSpec(np.array(out), normalized=mel.normalized)
