# frontend/wav.py
#
# RIFF/WAVE ingest: PCM16 and FLOAT32 only, mixed down to mono, samples in
# [-1, 1]. Other codecs are rejected with their format tag in the message.

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.io import wavfile

from utils.errors import DataError, UnsupportedFormatError

PCM16_SCALE = 32768.0
SAMPLE_FORMATS = ("pcm16", "float32")


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self) -> None:
        if self.sample_rate <= 0:
            raise DataError(f"sample_rate must be positive, got {self.sample_rate}")
        if np.asarray(self.samples).ndim != 1:
            raise DataError(f"AudioClip holds mono samples, got shape {np.shape(self.samples)}")

    @property
    def duration(self) -> float:
        return len(self.samples) / float(self.sample_rate)


def _format_tag(path: Path) -> Optional[int]:
    """Read the wFormatTag of the fmt chunk, or None if there is none."""
    try:
        raw = path.read_bytes()
    except OSError:
        return None
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        return None
    pos = 12
    while pos + 8 <= len(raw):
        chunk_id = raw[pos:pos + 4]
        (size,) = struct.unpack("<I", raw[pos + 4:pos + 8])
        if chunk_id == b"fmt " and pos + 10 <= len(raw):
            return struct.unpack("<H", raw[pos + 8:pos + 10])[0]
        pos += 8 + size + (size & 1)
    return None


def load_wav(path: str | Path) -> AudioClip:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"WAV file not found: {p}")

    try:
        sample_rate, data = wavfile.read(str(p))
    except (ValueError, EOFError, struct.error) as e:
        tag = _format_tag(p)
        tag_txt = f"format tag 0x{tag:04x}" if tag is not None else "no RIFF/WAVE header"
        raise UnsupportedFormatError(f"{p}: cannot decode ({tag_txt}): {e}") from None

    if data.dtype == np.int16:
        samples = data.astype(np.float64) / PCM16_SCALE
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        tag = _format_tag(p)
        tag_txt = f"format tag 0x{tag:04x}" if tag is not None else "unknown format tag"
        raise UnsupportedFormatError(
            f"{p}: unsupported codec ({tag_txt}, {data.dtype}); only PCM16 and FLOAT32 are decoded"
        )

    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    return AudioClip(np.ascontiguousarray(samples), int(sample_rate))


def write_wav(path: str | Path, samples: np.ndarray, sample_rate: int, fmt: str = "pcm16") -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    x = np.asarray(samples, dtype=np.float64)
    if fmt == "pcm16":
        q = np.clip(np.round(x * PCM16_SCALE), -32768, 32767).astype(np.int16)
        wavfile.write(str(p), int(sample_rate), q)
    elif fmt == "float32":
        wavfile.write(str(p), int(sample_rate), x.astype(np.float32))
    else:
        raise ValueError(f"unknown sample format {fmt!r}; expected one of {SAMPLE_FORMATS}")
    return p


def resample_linear(clip: AudioClip, target_rate: int) -> AudioClip:
    """Linear-interpolation resampling; identity when the rates already match."""
    if clip.sample_rate == target_rate:
        return clip
    n_out = max(1, int(round(len(clip.samples) * target_rate / clip.sample_rate)))
    t_in = np.arange(len(clip.samples)) / clip.sample_rate
    t_out = np.arange(n_out) / target_rate
    return AudioClip(np.interp(t_out, t_in, clip.samples), int(target_rate))
