# training/checkpoint.py
#
# Binary checkpoint container, little-endian throughout:
#
#   b"ASRH" | u32 version | u64 header length | header (canonical JSON)
#   u32 record count | records sorted by name
#
#   record = u32 name length | name (UTF-8) | u8 dtype tag | u8 rank
#            | u64 extent * rank | raw array bytes
#
# The header carries the model and frontend configs, their sha256 hash,
# the normalisation statistics and an optional train state. Optimizer
# moments are stored as records named optim.m.<param> / optim.v.<param>.

from __future__ import annotations

import io
import json
import logging
import struct
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from config import FrontendConfig, ModelConfig, canonical_json, config_hash, differing_fields
from frontend.features import Normalizer
from mixer.model import Model, param_shapes
from training.optim import AdamState
from utils.errors import CheckpointFormatError, IncompatibleCheckpointError
from utils.log import log_event

logger = logging.getLogger(__name__)

MAGIC = b"ASRH"
VERSION = 1
DTYPE_TAGS = {np.dtype("<f4"): 0, np.dtype("<f8"): 1, np.dtype("<i8"): 2}
TAG_DTYPES = {v: k for k, v in DTYPE_TAGS.items()}
OPTIM_PREFIXES = ("optim.m.", "optim.v.")


@dataclass
class Checkpoint:
    model_config: ModelConfig
    frontend_config: FrontendConfig
    arrays: "OrderedDict[str, np.ndarray]"
    normalizer: Optional[Normalizer] = None
    train_state: Dict[str, Any] = field(default_factory=dict)
    optimizer: Optional[AdamState] = None

    @property
    def config_hash(self) -> str:
        return config_hash(asdict(self.model_config), asdict(self.frontend_config))

    @classmethod
    def from_model(
        cls,
        model: Model,
        frontend_config: FrontendConfig,
        normalizer: Optional[Normalizer] = None,
        train_state: Optional[Dict[str, Any]] = None,
        optimizer: Optional[AdamState] = None,
    ) -> "Checkpoint":
        return cls(model.cfg, frontend_config, model.arrays(), normalizer, dict(train_state or {}), optimizer)

    def to_model(self) -> Model:
        return Model.from_arrays(self.model_config, self.arrays)


# -------------------------------------------------------------------------
# Encoding
# -------------------------------------------------------------------------
def _header(ckpt: Checkpoint) -> bytes:
    blob = {
        "config_hash": ckpt.config_hash,
        "frontend": asdict(ckpt.frontend_config),
        "model": asdict(ckpt.model_config),
        "normalization": ckpt.normalizer.to_dict() if ckpt.normalizer else None,
        "train_state": ckpt.train_state,
    }
    if ckpt.optimizer is not None:
        blob["train_state"] = dict(ckpt.train_state, optimizer_step=ckpt.optimizer.step)
    return canonical_json(blob).encode("utf-8")


def _records(ckpt: Checkpoint) -> Dict[str, np.ndarray]:
    out: Dict[str, np.ndarray] = dict(ckpt.arrays)
    if ckpt.optimizer is not None:
        for name in ckpt.arrays:
            out[f"optim.m.{name}"] = ckpt.optimizer.m[name]
            out[f"optim.v.{name}"] = ckpt.optimizer.v[name]
    return out


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    buf = io.BytesIO()
    header = _header(ckpt)
    buf.write(MAGIC)
    buf.write(struct.pack("<IQ", VERSION, len(header)))
    buf.write(header)

    records = _records(ckpt)
    buf.write(struct.pack("<I", len(records)))
    for name in sorted(records):
        arr = np.asarray(records[name])
        dt = arr.dtype.newbyteorder("<")
        if dt not in DTYPE_TAGS:
            raise CheckpointFormatError(f"{name}: dtype {arr.dtype} cannot be stored")
        raw_name = name.encode("utf-8")
        buf.write(struct.pack("<I", len(raw_name)))
        buf.write(raw_name)
        buf.write(struct.pack("<BB", DTYPE_TAGS[dt], arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype=dt).tobytes())
    return buf.getvalue()


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    data = encode_checkpoint(ckpt)
    tmp = p.with_name(p.name + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(p)
    log_event("CHECKPOINT", "checkpoint saved", {"path": str(p), "bytes": len(data), "config_hash": ckpt.config_hash})
    return p


# -------------------------------------------------------------------------
# Decoding
# -------------------------------------------------------------------------
class _Reader:
    def __init__(self, data: bytes, source: str) -> None:
        self.data = data
        self.pos = 0
        self.source = source

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise CheckpointFormatError(
                f"{self.source}: truncated at byte {self.pos} (needed {n}, have {len(self.data) - self.pos})"
            )
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _section(cls, data: Any, name: str, source: str):
    if not isinstance(data, dict):
        raise CheckpointFormatError(f"{source}: header {name} must be an object, got {type(data).__name__}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as e:
        raise CheckpointFormatError(f"{source}: bad {name} in header: {e}") from None


def _normalizer(data: Any, source: str) -> Optional[Normalizer]:
    if data is None:
        return None
    norm = _section(Normalizer, data, "normalization", source)
    for v in (norm.mean, norm.std):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise CheckpointFormatError(f"{source}: normalization statistics must be numbers, got {data}")
    return Normalizer(float(norm.mean), float(norm.std))


def _optimizer_step(train_state: Dict[str, Any], source: str) -> int:
    step = train_state.get("optimizer_step", 0)
    if isinstance(step, bool) or not isinstance(step, int) or step < 0:
        raise CheckpointFormatError(f"{source}: optimizer_step must be a non-negative integer, got {step!r}")
    return step


def decode_checkpoint(data: bytes, source: str = "<bytes>") -> Checkpoint:
    r = _Reader(data, source)
    if r.take(4) != MAGIC:
        raise CheckpointFormatError(f"{source}: not a checkpoint (bad magic)")
    version, header_len = r.unpack("<IQ")
    if version != VERSION:
        raise CheckpointFormatError(f"{source}: unsupported checkpoint version {version} (expected {VERSION})")
    try:
        header = json.loads(r.take(header_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointFormatError(f"{source}: corrupt header: {e}") from None
    if not isinstance(header, dict):
        raise CheckpointFormatError(f"{source}: header is not a JSON object")

    try:
        model_cfg = _section(ModelConfig, header["model"], "model", source)
        frontend_cfg = _section(FrontendConfig, header["frontend"], "frontend", source)
    except KeyError as e:
        raise CheckpointFormatError(f"{source}: header is missing {e}") from None
    normalizer = _normalizer(header.get("normalization"), source)
    train_state = header.get("train_state") or {}
    if not isinstance(train_state, dict):
        raise CheckpointFormatError(f"{source}: header train_state must be an object")

    (count,) = r.unpack("<I")
    records: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = r.unpack("<I")
        name = r.take(name_len).decode("utf-8", errors="replace")
        tag, rank = r.unpack("<BB")
        if tag not in TAG_DTYPES:
            raise CheckpointFormatError(f"{source}: record {name!r} has unknown dtype tag {tag}")
        shape = r.unpack(f"<{rank}Q") if rank else ()
        dt = TAG_DTYPES[tag]
        nbytes = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
        records[name] = np.frombuffer(r.take(nbytes), dtype=dt).reshape(shape).copy()
    if r.pos != len(data):
        raise CheckpointFormatError(f"{source}: {len(data) - r.pos} trailing bytes after the last record")

    ckpt = Checkpoint(
        model_config=model_cfg,
        frontend_config=frontend_cfg,
        arrays=OrderedDict(),
        normalizer=normalizer,
        train_state={k: v for k, v in train_state.items() if k != "optimizer_step"},
    )
    if header.get("config_hash") != ckpt.config_hash:
        raise CheckpointFormatError(f"{source}: stored config hash does not match the stored configs")

    expected = param_shapes(model_cfg)
    for name, shape in expected.items():
        if name not in records:
            raise CheckpointFormatError(f"{source}: missing parameter {name}")
        if records[name].shape != shape:
            raise CheckpointFormatError(f"{source}: {name} has shape {records[name].shape}, expected {shape}")
        ckpt.arrays[name] = records[name]
    extra = sorted(n for n in records if n not in expected and not n.startswith(OPTIM_PREFIXES))
    if extra:
        raise CheckpointFormatError(f"{source}: unexpected records {extra[:5]}")

    if any(n.startswith(OPTIM_PREFIXES) for n in records):
        missing = [f"{p}{n}" for p in OPTIM_PREFIXES for n in expected if f"{p}{n}" not in records]
        if missing:
            raise CheckpointFormatError(f"{source}: incomplete optimizer state, missing {missing[:5]}")
        ckpt.optimizer = AdamState(
            m={n: records[f"optim.m.{n}"] for n in expected},
            v={n: records[f"optim.v.{n}"] for n in expected},
            step=_optimizer_step(train_state, source),
        )
    return ckpt


def load_checkpoint(
    path: str | Path,
    expected_model: Optional[ModelConfig] = None,
    expected_frontend: Optional[FrontendConfig] = None,
) -> Checkpoint:
    """
    Read and verify a checkpoint. When expected configs are given, any
    differing field raises IncompatibleCheckpointError naming it.
    """
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"checkpoint not found: {p}")
    ckpt = decode_checkpoint(p.read_bytes(), str(p))

    diffs = []
    if expected_model is not None:
        diffs += differing_fields(asdict(expected_model), asdict(ckpt.model_config), "model.")
    if expected_frontend is not None:
        diffs += differing_fields(asdict(expected_frontend), asdict(ckpt.frontend_config), "frontend.")
    if diffs:
        raise IncompatibleCheckpointError(
            f"checkpoint {p} was built for a different configuration; differing fields: {', '.join(diffs)}",
            fields=diffs,
        )
    logger.info("Loaded checkpoint %s (%s, %d parameters)", p, ckpt.model_config.variant, len(ckpt.arrays))
    return ckpt


def checkpoint_equal(a: Checkpoint, b: Checkpoint) -> bool:
    return encode_checkpoint(a) == encode_checkpoint(b)
