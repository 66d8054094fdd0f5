from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from config import ModelConfig, RunConfig, load_run_config
from frontend.synth import generate_tone_dataset

ROOT = Path(__file__).resolve().parents[1]
DESK_CONFIG = ROOT / "configs" / "desk.json"
FULL_CONFIG = ROOT / "configs" / "full.json"

# small enough for CLI round trips in a few seconds
TINY_RUN = {
    "frontend": {
        "sample_rate": 8000, "window_len": 200, "hop_len": 80, "n_fft": 256,
        "mel_bins": 32, "fmin": 0.0, "fmax": 4000.0, "target_frames": 16,
        "patch_t": 4, "patch_f": 8, "embed_dim": 16, "seq_len": 16,
    },
    "model": {
        "seq_len": 16, "embed_dim": 16, "depth": 2, "num_classes": 4,
        "patch_dim": 32, "ff_expansion_channel": 2.0, "ff_expansion_token": 0.5,
    },
    "train": {"epochs": 2, "batch_size": 8, "lr0": 1e-3, "seed": 0},
}


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _isolated_event_log(tmp_path, monkeypatch):
    monkeypatch.setenv("RHMIXER_LOG_DIR", str(tmp_path / "logs"))


@pytest.fixture(scope="session")
def desk_cfg() -> RunConfig:
    return load_run_config(DESK_CONFIG)


@pytest.fixture
def small_model_cfg() -> ModelConfig:
    return ModelConfig(seq_len=8, embed_dim=16, depth=2, num_classes=3, patch_dim=4,
                       ff_expansion_channel=2.0, ff_expansion_token=0.5)


@pytest.fixture(scope="session")
def tiny_config_path(tmp_path_factory) -> Path:
    path = tmp_path_factory.mktemp("cfg") / "tiny.json"
    path.write_text(json.dumps(TINY_RUN), encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def tiny_cfg(tiny_config_path) -> RunConfig:
    return load_run_config(tiny_config_path)


@pytest.fixture(scope="session")
def tone_manifest(tmp_path_factory) -> Path:
    """24 train / 8 val / 8 test clips, 0.3 s at 8 kHz."""
    out = tmp_path_factory.mktemp("tones")
    return generate_tone_dataset(out, n_train=24, n_val=8, n_test=8, seed=0, duration=0.3)


@pytest.fixture(scope="session")
def fold_manifest(tmp_path_factory) -> Path:
    """16 clips over fold0 / fold1."""
    out = tmp_path_factory.mktemp("folds")
    return generate_tone_dataset(out, n_train=16, n_test=0, folds=2, seed=1, duration=0.3)
