from __future__ import annotations

import os
import sys
import json
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional, Dict, TextIO


LOG_FORMAT = "%(asctime)s [%(levelname)s] %(message)s"


def _log_path() -> str:
    log_dir = os.environ.get("RHMIXER_LOG_DIR", "logs")
    return os.path.join(log_dir, "pipeline.log")


def setup_logging(level: int = logging.INFO) -> None:
    """
    Route operational messages to stderr; stdout stays machine-readable.
    """
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr)


def log_event(stage: str, message: str, extra: Optional[Dict[str, Any]] = None) -> None:
    """
    Append a structured log line to $RHMIXER_LOG_DIR/pipeline.log.

    Each line is a JSON object:
        {
          "ts": "...",
          "stage": "TRAIN",
          "message": "epoch finished",
          "extra": { ... }
        }
    """
    try:
        path = _log_path()
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        rec: Dict[str, Any] = {
            "ts": datetime.now(timezone.utc).isoformat(),
            "stage": stage,
            "message": message,
        }
        if extra is not None:
            rec["extra"] = extra

        with open(path, "a", encoding="utf-8") as f:
            f.write(json.dumps(rec, default=str) + "\n")
    except Exception:
        # Logging must never crash a run; fail silently.
        pass


class MetricsStream:
    """
    One JSON object per line, echoed to stdout and appended to a
    metrics.jsonl file. No timestamps: identical runs give identical files.
    """

    def __init__(
        self,
        path: Optional[Path] = None,
        echo: bool = True,
        stream: Optional[TextIO] = None,
    ) -> None:
        self.path = Path(path) if path is not None else None
        self.echo = echo
        self.stream = stream
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)

    def write(self, record: Dict[str, Any]) -> None:
        line = json.dumps(record, sort_keys=True)
        if self.echo:
            out = self.stream if self.stream is not None else sys.stdout
            out.write(line + "\n")
            out.flush()
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(line + "\n")
