# training/crossval.py
#
# Experiment protocols built on training.loop.train:
#   - train_on_manifest: train / val / test splits of one manifest
#   - kfold:             one model per held-out fold, mean / best summary
#   - sweep:             variant x seed grid (the ablation table)
#
# Features are extracted once per protocol through a shared FeatureBank.

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from config import RunConfig, write_effective_config
from frontend.dataset import FeatureBank, build_splits
from frontend.manifest import DatasetManifest, fold_index
from mixer.model import build_variant
from training.loop import TrainResult, train
from training.metrics import MetricsReport
from training.summary import summarize_folds, summarize_runs
from utils.errors import DataError
from utils.log import MetricsStream, log_event

logger = logging.getLogger(__name__)


def _stream(out_dir: Optional[Path], echo: bool) -> Optional[MetricsStream]:
    if out_dir is None:
        return MetricsStream(None, echo=True) if echo else None
    path = out_dir / "metrics.jsonl"
    if path.exists():
        path.unlink()
    return MetricsStream(path, echo=echo)


def _plain(row: Dict[str, object]) -> Dict[str, object]:
    return {key: val.item() if hasattr(val, "item") else val for key, val in row.items()}


def train_on_manifest(
    manifest: DatasetManifest,
    run_cfg: RunConfig,
    out_dir: Optional[str | Path] = None,
    echo: bool = True,
    bank: Optional[FeatureBank] = None,
) -> TrainResult:
    """train on `train`, select on `val`, report on `test` when present."""
    out = Path(out_dir) if out_dir is not None else None
    bank = bank or FeatureBank(run_cfg.frontend)
    groups = {name: manifest.split(name) for name in ("train", "val", "test")}
    arrays, normalizer = build_splits(bank, groups)

    model = build_variant(run_cfg.model, seed=run_cfg.train.seed, dtype=np.dtype(run_cfg.train.dtype))
    if out is not None:
        write_effective_config(run_cfg, out)
    return train(model, arrays, run_cfg.train, run_cfg.frontend, normalizer, out, _stream(out, echo))


# ---------------------------------------------------------------------
# k-fold
# ---------------------------------------------------------------------


@dataclass
class KFoldResult:
    folds: List[str]
    reports: List[MetricsReport]
    table: pd.DataFrame
    summary: pd.DataFrame
    checkpoints: List[Path] = field(default_factory=list)


def check_folds(manifest: DatasetManifest, k: Optional[int] = None) -> List[str]:
    """Fold names fold0..fold{k-1}; every row must carry one."""
    rows = manifest.rows
    stray = rows.index[rows["split"].map(fold_index).isna()].tolist()
    if stray:
        raise DataError(f"k-fold needs a fold label on every row; rows {stray[:5]} have split "
                        f"{rows.loc[stray[0], 'split']!r}")
    present = manifest.folds()
    if not present:
        raise DataError("manifest carries no fold labels")
    k = k if k is not None else max(fold_index(f) for f in present) + 1
    missing = [f"fold{i}" for i in range(k) if f"fold{i}" not in present]
    if missing:
        raise DataError(f"manifest is missing {', '.join(missing)} for a {k}-fold run")
    extra = [f for f in present if fold_index(f) >= k]
    if extra:
        raise DataError(f"manifest has {', '.join(extra)} beyond a {k}-fold run")
    return [f"fold{i}" for i in range(k)]


def kfold(
    manifest: DatasetManifest,
    run_cfg: RunConfig,
    out_dir: Optional[str | Path] = None,
    k: Optional[int] = None,
    echo: bool = True,
    bank: Optional[FeatureBank] = None,
) -> KFoldResult:
    """
    Train one model per fold with that fold held out. The held-out fold is
    both the selection and the reporting split; the summary gives mean and
    best accuracy across folds.
    """
    folds = check_folds(manifest, k)
    out = Path(out_dir) if out_dir is not None else None
    bank = bank or FeatureBank(run_cfg.frontend)
    if out is not None:
        write_effective_config(run_cfg, out)

    reports: List[MetricsReport] = []
    checkpoints: List[Path] = []
    rows = []
    for i, held_out in enumerate(folds):
        groups = {
            "train": manifest.select(f for f in folds if f != held_out),
            "val": manifest.split(held_out),
        }
        arrays, normalizer = build_splits(bank, groups)
        model = build_variant(run_cfg.model, seed=run_cfg.train.seed, dtype=np.dtype(run_cfg.train.dtype))
        fold_dir = out / held_out if out is not None else None
        result = train(model, arrays, run_cfg.train, run_cfg.frontend, normalizer,
                       fold_dir, _stream(fold_dir, echo))

        rep = result.best
        reports.append(rep)
        if result.checkpoint_path is not None:
            checkpoints.append(result.checkpoint_path)
        rows.append({"fold": i, "acc": rep.acc, "auc": rep.auc, "loss": rep.loss, "n": rep.n,
                     "best_epoch": result.best_epoch})
        log_event("KFOLD", "fold finished", {"fold": held_out, "acc": rep.acc, "auc": rep.auc})
        logger.info("%s: acc=%.4f auc=%.4f (epoch %d)", held_out, rep.acc, rep.auc, result.best_epoch)

    table = pd.DataFrame(rows)
    summary = summarize_folds(table)
    if out is not None:
        table.to_csv(out / "folds.csv", index=False)
        (out / "summary.json").write_text(
            json.dumps(_plain(summary.iloc[0].to_dict()), sort_keys=True) + "\n", encoding="utf-8"
        )
    return KFoldResult(folds, reports, table, summary, checkpoints)


# ---------------------------------------------------------------------
# Variant x seed sweep
# ---------------------------------------------------------------------


@dataclass
class SweepResult:
    runs: pd.DataFrame
    summary: pd.DataFrame


def sweep(
    manifest: DatasetManifest,
    run_cfg: RunConfig,
    variants: Sequence[str],
    seeds: Sequence[int],
    out_dir: Optional[str | Path] = None,
    echo: bool = True,
) -> SweepResult:
    """
    Train every (variant, seed) pair on the same features. Each run reports
    its test split when the manifest has one, else its selection split.
    """
    out = Path(out_dir) if out_dir is not None else None
    bank = FeatureBank(run_cfg.frontend)
    groups = {name: manifest.split(name) for name in ("train", "val", "test")}
    arrays, normalizer = build_splits(bank, groups)

    rows: List[Dict[str, object]] = []
    for variant in variants:
        for seed in seeds:
            cfg = run_cfg.with_overrides(seed=seed, variant=variant)
            run_dir = out / f"{variant}-seed{seed}" if out is not None else None
            if run_dir is not None:
                write_effective_config(cfg, run_dir)
            model = build_variant(cfg.model, seed=seed, dtype=np.dtype(cfg.train.dtype))
            result = train(model, arrays, cfg.train, cfg.frontend, normalizer, run_dir, _stream(run_dir, echo))
            rep = result.test or result.best
            rows.append({"variant": variant, "seed": int(seed), "split": rep.split, "acc": rep.acc,
                         "auc": rep.auc, "loss": rep.loss, "n": rep.n,
                         "params": model.num_parameters()})
            log_event("SWEEP", "run finished", rows[-1])

    runs = pd.DataFrame(rows)
    summary = summarize_runs(runs)
    if out is not None:
        runs.to_csv(out / "runs.csv", index=False)
        summary.to_csv(out / "summary.csv", index=False)
    return SweepResult(runs, summary)
