# app.py
#
# Command-line entry point.
#
#   python app.py train    --config C --manifest M --out DIR [--seed N] [--variant V]
#   python app.py eval     --checkpoint CK --manifest M [--split test] [--config C]
#   python app.py infer    --checkpoint CK clip.wav
#   python app.py kfold    --config C --manifest M --out DIR [--k K]
#   python app.py ablate   --config C --manifest M --out DIR [--variants RH,H,R,baseline] [--seeds 0,1,2]
#   python app.py synth    --out DIR [--train 400] [--test 100] [--folds 0]
#   python app.py selftest
#
# Exit codes: 0 ok, 1 runtime error, 2 config/checkpoint error, 3 data error.
# Machine-readable results go to stdout, log messages to stderr.

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import List, Optional, Sequence

import numpy as np

from config import VARIANTS, RunConfig, load_run_config
from diagnostics.selftest import main as selftest_main
from frontend.dataset import FeatureBank, clip_patches
from frontend.manifest import load_manifest
from frontend.synth import generate_tone_dataset
from frontend.wav import load_wav
from training.checkpoint import load_checkpoint
from training.crossval import kfold, sweep, train_on_manifest
from training.loop import evaluate, predict_proba
from utils.errors import CheckpointFormatError, ConfigError, DataError, RhMixerError
from utils.log import log_event, setup_logging

logger = logging.getLogger("rhmixer")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_DATA = 3


def _csv_list(value: str) -> List[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _run_config(args: argparse.Namespace, num_classes: Optional[int] = None) -> RunConfig:
    cfg = load_run_config(args.config)
    return cfg.with_overrides(
        seed=getattr(args, "seed", None),
        variant=getattr(args, "variant", None),
        num_classes=num_classes,
    )


def _print_json(obj) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")
    sys.stdout.flush()


# ---------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------


def cmd_train(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    cfg = _run_config(args, num_classes=manifest.num_classes)
    result = train_on_manifest(manifest, cfg, args.out, echo=not args.quiet)
    logger.info("best epoch %d on %s: acc=%.4f auc=%.4f; checkpoint %s",
                result.best_epoch, result.best.split, result.best.acc, result.best.auc, result.checkpoint_path)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    expected = load_run_config(args.config) if args.config else None
    ckpt = load_checkpoint(
        args.checkpoint,
        expected_model=expected.model if expected else None,
        expected_frontend=expected.frontend if expected else None,
    )
    manifest = load_manifest(args.manifest)
    bank = FeatureBank(ckpt.frontend_config)
    normalizer = ckpt.normalizer
    if normalizer is None:
        logger.warning("Checkpoint has no normalization statistics; fitting them on the train split")
        normalizer = bank.fit_normalizer(manifest.split("train"))

    data = bank.arrays(manifest.split(args.split), normalizer, args.split)
    report = evaluate(ckpt.to_model(), data, args.split, batch_size=args.batch_size)
    log_event("EVAL", "evaluation finished", report.to_record())
    _print_json(report.to_record(variant=ckpt.model_config.variant))
    return EXIT_OK


def cmd_infer(args: argparse.Namespace) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    if ckpt.normalizer is None:
        raise DataError(f"checkpoint {args.checkpoint} carries no normalization statistics; cannot run inference")
    bank = FeatureBank(ckpt.frontend_config)
    patches = clip_patches(bank.clip_mel(load_wav(args.wav)), ckpt.frontend_config, ckpt.normalizer)
    scores = predict_proba(ckpt.to_model(), patches[None])[0]
    _print_json({"label": int(np.argmax(scores)), "scores": [float(s) for s in scores]})
    return EXIT_OK


def cmd_kfold(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    cfg = _run_config(args, num_classes=manifest.num_classes)
    result = kfold(manifest, cfg, args.out, k=args.k, echo=not args.quiet)
    print(result.table.to_string(index=False))
    _print_json({k: (v.item() if hasattr(v, "item") else v) for k, v in result.summary.iloc[0].items()})
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace) -> int:
    variants = _csv_list(args.variants)
    bad = [v for v in variants if v not in VARIANTS]
    if bad:
        raise ConfigError(f"unknown variant(s) {bad}; expected {', '.join(VARIANTS)}")
    try:
        seeds = [int(s) for s in _csv_list(args.seeds)]
    except ValueError:
        raise ConfigError(f"--seeds must be comma-separated integers, got {args.seeds!r}") from None

    manifest = load_manifest(args.manifest)
    cfg = _run_config(args, num_classes=manifest.num_classes)
    result = sweep(manifest, cfg, variants, seeds, args.out, echo=not args.quiet)
    print(result.summary.to_string(index=False))
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    path = generate_tone_dataset(
        args.out,
        n_train=args.train,
        n_test=args.test,
        n_val=args.val,
        folds=args.folds,
        seed=args.seed,
        sample_rate=args.sample_rate,
        duration=args.duration,
    )
    print(path)
    return EXIT_OK


def cmd_selftest(args: argparse.Namespace) -> int:
    return selftest_main(seed=args.seed)


# ---------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rhmixer", description="RH audio mixer: train, evaluate and verify")
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model on the train/val/test splits of a manifest")
    p.add_argument("--config", default=None, help="run config JSON (defaults if omitted)")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--variant", choices=VARIANTS, default=None)
    p.add_argument("--quiet", action="store_true", help="do not echo metrics to stdout")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on one manifest split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--config", default=None, help="reject the checkpoint unless it matches this config")
    p.add_argument("--batch-size", type=int, default=128)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="classify one WAV file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("wav")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("kfold", help="k-fold cross-validation over fold<i> splits")
    p.add_argument("--config", default=None)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=None, help="number of folds (default: from the manifest)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--variant", choices=VARIANTS, default=None)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_kfold)

    p = sub.add_parser("ablate", help="train every variant x seed and summarise")
    p.add_argument("--config", default=None)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--variants", default=",".join(VARIANTS))
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("synth", help="write the synthetic tone/chirp dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--train", type=int, default=400)
    p.add_argument("--test", type=int, default=100)
    p.add_argument("--val", type=int, default=0)
    p.add_argument("--folds", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sample-rate", type=int, default=8000)
    p.add_argument("--duration", type=float, default=0.8)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("selftest", help="run the oracle property suite")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_selftest)
    return ap


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, (ConfigError, CheckpointFormatError)):
        return EXIT_CONFIG
    if isinstance(exc, (DataError, FileNotFoundError)):
        return EXIT_DATA
    return EXIT_RUNTIME


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(logging.DEBUG if args.verbose else logging.INFO)
    try:
        return args.func(args)
    except (RhMixerError, FileNotFoundError) as exc:
        code = exit_code_for(exc)
        print(f"error: {exc}", file=sys.stderr)
        log_event(args.command.upper(), "command failed", {"error": type(exc).__name__, "message": str(exc)})
        return code
    except Exception as exc:
        logger.exception("%s failed: %s", args.command, exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
