# config.py
# =============================================================================
# Run configuration: frontend, model and train sections.
#
# Every section is a frozen dataclass that validates itself. A run config
# file is canonical JSON with exactly these three sections; unknown keys are
# rejected and missing keys take the defaults below.
# =============================================================================

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional

from utils.errors import ConfigError

VARIANTS = ("RH", "H", "R", "baseline")
DTYPES = ("float32", "float64")


def canonical_json(obj: Any) -> str:
    """Sorted keys, compact separators; the form hashed and persisted."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


# -------------------------------------------------------------------------
# Sections
# -------------------------------------------------------------------------
@dataclass(frozen=True)
class FrontendConfig:
    sample_rate: int = 16000
    window_len: int = 400
    hop_len: int = 160
    n_fft: int = 1024
    mel_bins: int = 128
    fmin: float = 0.0
    fmax: float = 8000.0
    target_frames: int = 300
    patch_t: int = 4
    patch_f: int = 16
    embed_dim: int = 768
    seq_len: int = 600

    def __post_init__(self) -> None:
        for name in ("sample_rate", "window_len", "hop_len", "n_fft", "mel_bins",
                     "target_frames", "patch_t", "patch_f", "embed_dim", "seq_len"):
            _require(int(getattr(self, name)) > 0, f"frontend.{name} must be positive")
        _require(self.n_fft >= self.window_len,
                 f"frontend.n_fft ({self.n_fft}) must be >= window_len ({self.window_len})")
        _require(0.0 <= self.fmin < self.fmax <= self.sample_rate / 2.0,
                 f"frontend needs 0 <= fmin < fmax <= sample_rate/2, got "
                 f"fmin={self.fmin} fmax={self.fmax} sample_rate={self.sample_rate}")
        _require(self.target_frames % self.patch_t == 0,
                 f"frontend.patch_t ({self.patch_t}) must divide target_frames ({self.target_frames})")
        _require(self.mel_bins % self.patch_f == 0,
                 f"frontend.patch_f ({self.patch_f}) must divide mel_bins ({self.mel_bins})")
        _require(self.time_patches * self.freq_patches == self.seq_len,
                 f"frontend patch grid {self.time_patches}x{self.freq_patches} "
                 f"does not give seq_len {self.seq_len}")

    @property
    def time_patches(self) -> int:
        return self.target_frames // self.patch_t

    @property
    def freq_patches(self) -> int:
        return self.mel_bins // self.patch_f

    @property
    def patch_dim(self) -> int:
        return self.patch_t * self.patch_f


@dataclass(frozen=True)
class ModelConfig:
    seq_len: int = 600
    embed_dim: int = 768
    depth: int = 12
    ff_expansion_channel: float = 4.0
    ff_expansion_token: float = 0.5
    num_classes: int = 10
    variant: str = "RH"
    roll_channels: int = 16
    roll_height_fold: int = 4
    patch_dim: int = 64
    layer_norm_eps: float = 1e-6

    def __post_init__(self) -> None:
        _require(self.seq_len > 0 and self.embed_dim > 0, "model.seq_len and model.embed_dim must be positive")
        _require(self.depth >= 1, f"model.depth must be >= 1, got {self.depth}")
        _require(self.embed_dim >= 4, f"model.embed_dim must be >= 4, got {self.embed_dim}")
        _require(self.num_classes >= 1, f"model.num_classes must be >= 1, got {self.num_classes}")
        _require(self.patch_dim >= 1, f"model.patch_dim must be >= 1, got {self.patch_dim}")
        _require(self.ff_expansion_channel > 0 and self.ff_expansion_token > 0,
                 "model feed-forward expansions must be positive")
        _require(self.variant in VARIANTS,
                 f"unknown model.variant {self.variant!r}; expected one of {', '.join(VARIANTS)}")
        C, Ca = self.roll_channels, self.roll_height_fold
        _require(C > 0 and Ca > 0 and C % Ca == 0,
                 f"model.roll_channels ({C}) must be divisible by roll_height_fold ({Ca})")
        _require(self.seq_len % Ca == 0,
                 f"model.seq_len ({self.seq_len}) must be divisible by roll_height_fold ({Ca})")
        _require((self.embed_dim * Ca) % C == 0,
                 f"model.embed_dim*roll_height_fold ({self.embed_dim * Ca}) must be divisible "
                 f"by roll_channels ({C})")

    @property
    def channel_hidden(self) -> int:
        return max(1, int(round(self.ff_expansion_channel * self.embed_dim)))

    @property
    def token_hidden(self) -> int:
        return max(1, int(round(self.ff_expansion_token * self.seq_len)))


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 2.5e-4
    decay_start_epoch: int = 5
    decay_factor: float = 0.85
    epochs: int = 30
    batch_size: int = 32
    eval_batch_size: int = 128
    seed: int = 0
    weight_decay: float = 0.0
    optimizer: str = "adam"
    dtype: str = "float32"

    def __post_init__(self) -> None:
        _require(self.lr0 > 0, f"train.lr0 must be > 0, got {self.lr0}")
        _require(0 < self.decay_factor <= 1, f"train.decay_factor must be in (0, 1], got {self.decay_factor}")
        _require(self.epochs >= 1, f"train.epochs must be >= 1, got {self.epochs}")
        _require(self.decay_start_epoch >= 0, "train.decay_start_epoch must be >= 0")
        _require(self.batch_size >= 1 and self.eval_batch_size >= 1, "train batch sizes must be >= 1")
        _require(self.weight_decay >= 0, "train.weight_decay must be >= 0")
        _require(self.optimizer == "adam", f"unknown train.optimizer {self.optimizer!r}")
        _require(self.dtype in DTYPES, f"train.dtype must be one of {DTYPES}, got {self.dtype!r}")


# -------------------------------------------------------------------------
# Run config
# -------------------------------------------------------------------------
_SECTIONS = {"frontend": FrontendConfig, "model": ModelConfig, "train": TrainConfig}


def _build_section(name: str, data: Mapping[str, Any]) -> Any:
    cls = _SECTIONS[name]
    if not isinstance(data, Mapping):
        raise ConfigError(f"config section {name!r} must be an object")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) in section {name!r}: {', '.join(unknown)}")
    kwargs: Dict[str, Any] = {}
    for key, value in data.items():
        default = getattr(cls, key)
        try:
            if isinstance(default, bool) or isinstance(default, str):
                kwargs[key] = value
            elif isinstance(default, int):
                if isinstance(value, float) and not value.is_integer():
                    raise ValueError(value)
                kwargs[key] = int(value)
            elif isinstance(default, float):
                kwargs[key] = float(value)
            else:
                kwargs[key] = value
        except (TypeError, ValueError):
            raise ConfigError(f"{name}.{key}: invalid value {value!r}") from None
    return cls(**kwargs)


@dataclass(frozen=True)
class RunConfig:
    frontend: FrontendConfig = field(default_factory=FrontendConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self) -> None:
        fe, m = self.frontend, self.model
        _require(fe.seq_len == m.seq_len,
                 f"frontend.seq_len ({fe.seq_len}) != model.seq_len ({m.seq_len})")
        _require(fe.embed_dim == m.embed_dim,
                 f"frontend.embed_dim ({fe.embed_dim}) != model.embed_dim ({m.embed_dim})")
        _require(fe.patch_dim == m.patch_dim,
                 f"frontend patch size {fe.patch_t}x{fe.patch_f}={fe.patch_dim} != model.patch_dim ({m.patch_dim})")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunConfig":
        if not isinstance(data, Mapping):
            raise ConfigError("run config must be a JSON object")
        unknown = sorted(set(data) - set(_SECTIONS))
        if unknown:
            raise ConfigError(f"unknown config section(s): {', '.join(unknown)}")
        parts = {name: _build_section(name, data.get(name, {})) for name in _SECTIONS}
        return cls(**parts)

    def to_dict(self) -> Dict[str, Any]:
        return {name: asdict(getattr(self, name)) for name in _SECTIONS}

    def with_overrides(
        self,
        seed: Optional[int] = None,
        variant: Optional[str] = None,
        num_classes: Optional[int] = None,
    ) -> "RunConfig":
        model, train = self.model, self.train
        if variant is not None:
            model = replace(model, variant=variant)
        if num_classes is not None:
            model = replace(model, num_classes=num_classes)
        if seed is not None:
            train = replace(train, seed=int(seed))
        return replace(self, model=model, train=train)


def load_run_config(path: Optional[str | Path] = None) -> RunConfig:
    """
    Load and validate a run config file. No path means all defaults.
    """
    if path is None:
        return RunConfig()
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ConfigError(f"config file {p} is not valid JSON: {e}") from None
    return RunConfig.from_dict(data)


def write_effective_config(cfg: RunConfig, out_dir: str | Path) -> Path:
    out = Path(out_dir) / "effective-config.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(cfg.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return out


def config_hash(model: Mapping[str, Any], frontend: Mapping[str, Any]) -> str:
    blob = canonical_json({"frontend": dict(frontend), "model": dict(model)})
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def differing_fields(expected: Mapping[str, Any], actual: Mapping[str, Any], prefix: str = "") -> List[str]:
    keys = sorted(set(expected) | set(actual))
    return [f"{prefix}{k}" for k in keys if expected.get(k) != actual.get(k)]
