"""
training/loop.py - the epoch loop, evaluation and inference.

    for epoch in 0..epochs-1:
        lr = lr_at(epoch)
        shuffle train with the seeded RNG, Adam step per batch
        emit a `train` record (running loss, in-epoch predictions)
        emit a `val` record when a validation split exists
        keep the parameters with the best (val acc, val auc)
    restore the best parameters, emit a `test` record if a test split exists

Given the same seed, config and arrays every record is identical.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional

import numpy as np

from autodiff.tensor import Tape
from config import FrontendConfig, TrainConfig
from frontend.dataset import SplitArrays
from frontend.features import Normalizer
from mixer.model import Model
from training.checkpoint import Checkpoint, save_checkpoint
from training.loss import check_labels, cross_entropy, softmax
from training.metrics import MetricsReport, build_report
from training.optim import AdamState, adam_step, lr_at
from utils.errors import DataError
from utils.log import MetricsStream, log_event

logger = logging.getLogger(__name__)


@dataclass
class TrainResult:
    model: Model
    checkpoint: Checkpoint
    best_epoch: int
    best: MetricsReport
    history: List[MetricsReport] = field(default_factory=list)
    test: Optional[MetricsReport] = None
    checkpoint_path: Optional[Path] = None


# ---------------------------------------------------------------------
# Inference
# ---------------------------------------------------------------------


def predict(model: Model, patches: np.ndarray, batch_size: int = 128) -> np.ndarray:
    """(N, S, P) patches -> (N, K) float64 logits, no tape."""
    x = np.asarray(patches)
    if x.shape[0] == 0:
        return np.zeros((0, model.cfg.num_classes))
    out = [model(x[i:i + batch_size]).data.astype(np.float64) for i in range(0, x.shape[0], batch_size)]
    return np.concatenate(out, axis=0)


def predict_proba(model: Model, patches: np.ndarray, batch_size: int = 128) -> np.ndarray:
    return softmax(predict(model, patches, batch_size))


def evaluate(
    model: Model,
    data: SplitArrays,
    split: str,
    epoch: Optional[int] = None,
    batch_size: int = 128,
) -> MetricsReport:
    if len(data) == 0:
        raise DataError(f"cannot evaluate on empty split {split!r}")
    check_labels(data.labels, model.cfg.num_classes)
    logits = predict(model, data.patches, batch_size)
    loss = cross_entropy(logits, data.labels).item()
    return build_report(split, epoch, logits, data.labels, loss)


# ---------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------


def train_step(model: Model, patches: np.ndarray, labels: np.ndarray, state: AdamState,
               lr: float, weight_decay: float = 0.0) -> tuple[float, np.ndarray]:
    """One Adam step on a batch; returns (loss, logits before the update)."""
    with Tape() as tape:
        logits = model(patches)
        loss = cross_entropy(logits, labels)
        tape.backward(loss)
    grads = {k: p.grad for k, p in model.params.items()}
    adam_step(model.params, grads, state, lr, weight_decay)
    model.zero_grad()
    return loss.item(), logits.data.astype(np.float64)


def train_epoch(
    model: Model,
    data: SplitArrays,
    state: AdamState,
    lr: float,
    cfg: TrainConfig,
    rng: np.random.Generator,
    epoch: int,
) -> MetricsReport:
    order = rng.permutation(len(data))
    losses, weights = [], []
    logits = np.zeros((len(data), model.cfg.num_classes))
    for start in range(0, len(order), cfg.batch_size):
        idx = order[start:start + cfg.batch_size]
        loss, batch_logits = train_step(model, data.patches[idx], data.labels[idx], state, lr, cfg.weight_decay)
        losses.append(loss)
        weights.append(len(idx))
        logits[idx] = batch_logits
    mean_loss = float(np.average(losses, weights=weights))
    return build_report("train", epoch, logits, data.labels, mean_loss)


def _record(report: MetricsReport, model: Model, cfg: TrainConfig, lr: float) -> Dict[str, object]:
    return report.to_record(
        variant=model.cfg.variant,
        seed=cfg.seed,
        optimizer=cfg.optimizer,
        decay_factor=cfg.decay_factor,
        lr=lr,
    )


def train(
    model: Model,
    data: Mapping[str, SplitArrays],
    train_cfg: TrainConfig,
    frontend_cfg: FrontendConfig,
    normalizer: Optional[Normalizer] = None,
    out_dir: Optional[str | Path] = None,
    metrics: Optional[MetricsStream] = None,
    select_split: str = "val",
    report_split: str = "test",
) -> TrainResult:
    """
    Train with the lr_at schedule and keep the best parameters on
    select_split (ACC, then AUC). Without that split, selection falls back
    to the training records. out_dir receives checkpoint.bin.
    """
    if "train" not in data or len(data["train"]) == 0:
        raise DataError("the training split is empty")
    for split in data.values():
        check_labels(split.labels, model.cfg.num_classes)
    if select_split not in data:
        logger.warning("No %r split; selecting the best epoch on training metrics", select_split)

    rng = np.random.default_rng(train_cfg.seed)
    state = AdamState.zeros_like(model.params)
    history: List[MetricsReport] = []
    best: Optional[MetricsReport] = None
    best_epoch = -1
    best_arrays = model.arrays()
    best_state = AdamState()

    for epoch in range(train_cfg.epochs):
        lr = lr_at(epoch, train_cfg)
        reports = [train_epoch(model, data["train"], state, lr, train_cfg, rng, epoch)]
        if select_split in data:
            reports.append(evaluate(model, data[select_split], select_split, epoch, train_cfg.eval_batch_size))
        for rep in reports:
            history.append(rep)
            if metrics is not None:
                metrics.write(_record(rep, model, train_cfg, lr))

        candidate = reports[-1]
        if best is None or candidate.selection_key > best.selection_key:
            best, best_epoch = candidate, epoch
            best_arrays = model.arrays()
            best_state = AdamState(
                m={k: v.copy() for k, v in state.m.items()},
                v={k: v.copy() for k, v in state.v.items()},
                step=state.step,
            )

        logger.info(
            "epoch %d lr=%.3g train_loss=%.4f train_acc=%.4f %s_acc=%.4f",
            epoch, lr, reports[0].loss, reports[0].acc, candidate.split, candidate.acc,
        )
        log_event("TRAIN", "epoch finished", {
            "epoch": epoch,
            "lr": lr,
            "variant": model.cfg.variant,
            "seed": train_cfg.seed,
            "reports": [r.to_record() for r in reports],
        })

    assert best is not None
    model.load_arrays(best_arrays)

    test_report = None
    if report_split in data and report_split != select_split:
        test_report = evaluate(model, data[report_split], report_split, best_epoch, train_cfg.eval_batch_size)
        history.append(test_report)
        if metrics is not None:
            metrics.write(_record(test_report, model, train_cfg, lr_at(best_epoch, train_cfg)))

    ckpt = Checkpoint.from_model(
        model,
        frontend_cfg,
        normalizer=normalizer,
        train_state={
            "best_epoch": best_epoch,
            "epochs": train_cfg.epochs,
            "optimizer": train_cfg.optimizer,
            "seed": train_cfg.seed,
            "selected_on": best.split,
        },
        optimizer=best_state,
    )
    path = save_checkpoint(ckpt, Path(out_dir) / "checkpoint.bin") if out_dir is not None else None
    return TrainResult(model, ckpt, best_epoch, best, history, test_report, path)


def overfit_batch(
    model: Model,
    patches: np.ndarray,
    labels: np.ndarray,
    lr: float = 2e-3,
    max_steps: int = 500,
    target: float = 0.01,
) -> List[float]:
    """Repeated full-batch steps until loss < target; returns every step's loss."""
    state = AdamState.zeros_like(model.params)
    losses: List[float] = []
    for _ in range(max_steps):
        loss, _ = train_step(model, patches, labels, state, lr)
        losses.append(loss)
        if loss < target:
            break
    return losses
