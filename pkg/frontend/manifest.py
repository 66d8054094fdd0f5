# frontend/manifest.py
#
# Dataset manifest: a UTF-8 CSV with header `path,label,split`.
#   path  - WAV path, relative paths resolve against the manifest directory
#   label - integer class index >= 0
#   split - train | val | test, or fold0 .. fold9 for k-fold runs
from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Mapping, Optional

import pandas as pd

from utils.errors import DataError

MANIFEST_COLUMNS = ["path", "label", "split"]
SPLITS = ("train", "val", "test")
FOLD_RE = re.compile(r"^fold([0-9])$")


def fold_index(split: str) -> Optional[int]:
    m = FOLD_RE.match(split)
    return int(m.group(1)) if m else None


@dataclass
class DatasetManifest:
    rows: pd.DataFrame  # path (absolute str), label (int), split (str)
    source: Optional[Path] = None

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def num_classes(self) -> int:
        return int(self.rows["label"].max()) + 1 if len(self.rows) else 0

    @property
    def splits(self) -> List[str]:
        return sorted(self.rows["split"].unique().tolist())

    def has_split(self, name: str) -> bool:
        return bool((self.rows["split"] == name).any())

    def split(self, name: str) -> pd.DataFrame:
        return self.rows[self.rows["split"] == name].reset_index(drop=True)

    def folds(self) -> List[str]:
        names = [s for s in self.splits if fold_index(s) is not None]
        return sorted(names, key=fold_index)

    def select(self, names: Iterable[str]) -> pd.DataFrame:
        wanted = set(names)
        return self.rows[self.rows["split"].isin(wanted)].reset_index(drop=True)


def load_manifest(path: str | Path) -> DatasetManifest:
    """
    Read and validate a manifest. Every row problem raises DataError with
    the 0-based data row index.
    """
    p = Path(path)
    if not p.is_file():
        raise DataError(f"manifest not found: {p}")

    try:
        df = pd.read_csv(p, dtype=str, encoding="utf-8", na_filter=False)
    except (UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError(f"manifest {p} is not a readable UTF-8 CSV: {e}") from None

    df.columns = [c.strip().lower() for c in df.columns]
    if list(df.columns) != MANIFEST_COLUMNS:
        raise DataError(f"manifest {p} header must be {','.join(MANIFEST_COLUMNS)}, got {','.join(df.columns)}")

    base = p.parent.resolve()
    paths, labels, splits = [], [], []
    for i, row in enumerate(df.itertuples(index=False)):
        raw_path, raw_label, raw_split = (str(v).strip() for v in row)
        if not raw_path:
            raise DataError(f"manifest row {i}: empty path")
        try:
            label = int(raw_label)
        except ValueError:
            raise DataError(f"manifest row {i}: label {raw_label!r} is not an integer") from None
        if label < 0:
            raise DataError(f"manifest row {i}: label {label} must be >= 0")
        if raw_split not in SPLITS and fold_index(raw_split) is None:
            raise DataError(f"manifest row {i}: unknown split {raw_split!r}")

        clip = Path(raw_path)
        paths.append(str(clip if clip.is_absolute() else base / clip))
        labels.append(label)
        splits.append(raw_split)

    rows = pd.DataFrame({"path": paths, "label": pd.Series(labels, dtype="int64"), "split": splits})
    return DatasetManifest(rows=rows, source=p)


def write_manifest(records: Iterable[Mapping[str, object]], path: str | Path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    df = pd.DataFrame(list(records), columns=MANIFEST_COLUMNS)
    df.to_csv(p, index=False, encoding="utf-8")
    return p
