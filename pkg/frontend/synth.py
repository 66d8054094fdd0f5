# frontend/synth.py
#
# Seeded synthetic corpus: four classes of tones and chirps in light noise,
# written as PCM16 WAVs plus a manifest. Frequencies scale with the sample
# rate so the classes stay separable at any configured rate.

from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, List

import numpy as np

from frontend.manifest import write_manifest
from frontend.wav import write_wav
from utils.errors import ConfigError

logger = logging.getLogger(__name__)

CLASS_NAMES = ("low_tone", "high_tone", "up_chirp", "down_chirp")
NOISE_LEVEL = 0.05


def synth_clip(label: int, rng: np.random.Generator, sample_rate: int, duration: float) -> np.ndarray:
    n = max(1, int(round(sample_rate * duration)))
    t = np.arange(n) / sample_rate
    amp = rng.uniform(0.3, 0.7)
    phase0 = rng.uniform(0.0, 2.0 * np.pi)
    lo = rng.uniform(0.05, 0.08) * sample_rate
    hi = rng.uniform(0.25, 0.30) * sample_rate

    if label == 0:
        phase = 2.0 * np.pi * lo * t
    elif label == 1:
        phase = 2.0 * np.pi * hi * t
    elif label in (2, 3):
        f0, f1 = (lo, hi) if label == 2 else (hi, lo)
        phase = 2.0 * np.pi * (f0 * t + (f1 - f0) * t * t / (2.0 * duration))
    else:
        raise ValueError(f"synthetic label must be in 0..{len(CLASS_NAMES) - 1}, got {label}")

    x = amp * np.sin(phase + phase0) + NOISE_LEVEL * rng.standard_normal(n)
    return np.clip(x, -1.0, 1.0)


def generate_tone_dataset(
    out_dir: str | Path,
    n_train: int = 400,
    n_test: int = 100,
    n_val: int = 0,
    folds: int = 0,
    seed: int = 0,
    sample_rate: int = 8000,
    duration: float = 0.8,
) -> Path:
    """
    Write <out_dir>/audio/*.wav and <out_dir>/manifest.csv; returns the
    manifest path. Labels cycle 0..3 so every split is balanced. With
    folds > 0 every clip is assigned fold<(i // 4) % folds> instead of a split,
    which keeps each fold class-balanced.
    """
    if folds < 0 or folds > 10:
        raise ConfigError(f"folds must be in 0..10, got {folds}")
    out = Path(out_dir)
    rng = np.random.default_rng(seed)

    plan: List[str] = ["train"] * n_train + ["val"] * n_val + ["test"] * n_test
    records: List[Dict[str, object]] = []
    for i, split in enumerate(plan):
        label = i % len(CLASS_NAMES)
        name = f"audio/{split}_{i:05d}_{CLASS_NAMES[label]}.wav"
        write_wav(out / name, synth_clip(label, rng, sample_rate, duration), sample_rate, "pcm16")
        records.append({
            "path": name,
            "label": label,
            "split": f"fold{(i // len(CLASS_NAMES)) % folds}" if folds else split,
        })

    manifest = write_manifest(records, out / "manifest.csv")
    logger.info("Wrote %d synthetic clips to %s", len(records), out)
    return manifest
