# utils/errors.py
#
# Exception hierarchy shared by every package. The CLI maps these to exit
# codes (config 2, data 3, everything else 1).

from __future__ import annotations


class RhMixerError(Exception):
    """Base class for all library errors."""


class ShapeError(RhMixerError, ValueError):
    """Dimension, rank, axis or length violation."""


class ContractError(RhMixerError):
    """Caller broke an API contract (e.g. backward on a non-scalar)."""


class NonFiniteError(RhMixerError, FloatingPointError):
    """NaN or Inf produced while finite checks are enabled."""


class StateError(RhMixerError):
    """Optimizer state does not line up with the parameters."""


class ConfigError(RhMixerError, ValueError):
    """Invalid configuration value, unknown key or unknown variant."""


class IncompatibleCheckpointError(ConfigError):
    """Checkpoint was produced by a different configuration."""

    def __init__(self, message: str, fields: list[str] | None = None) -> None:
        super().__init__(message)
        self.fields = list(fields or [])


class CheckpointFormatError(RhMixerError):
    """Corrupt, truncated or wrong-version checkpoint file."""


class DataError(RhMixerError):
    """Problem with a manifest, split, label or audio input."""


class UnsupportedFormatError(DataError):
    """Audio container or codec that the loader does not decode."""


class InputTooShortError(DataError):
    """Clip shorter than one analysis window."""
