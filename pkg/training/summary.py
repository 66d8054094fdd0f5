from __future__ import annotations

import duckdb
import pandas as pd

"""
Run summaries
-------------
Aggregates the per-fold and per-run report tables with DuckDB:
    • k-fold: k, mean / best / std accuracy, best fold, mean AUC
    • variant x seed sweeps: per-variant mean / std / best ACC and AUC
"""

FOLD_COLUMNS = ["fold", "acc", "auc", "loss", "n"]
RUN_COLUMNS = ["variant", "seed", "acc", "auc", "loss", "n"]


def _check_columns(df: pd.DataFrame, required, what: str) -> None:
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise ValueError(f"{what} table missing columns: {missing}")


def summarize_folds(folds: pd.DataFrame) -> pd.DataFrame:
    """
    One row: k, mean_acc, best_acc, best_fold, std_acc, mean_auc.
    Ties on best accuracy go to the lowest fold index.
    """
    _check_columns(folds, FOLD_COLUMNS, "fold report")
    con = duckdb.connect()
    try:
        con.register("fold_reports", folds[FOLD_COLUMNS])
        return con.execute(
            """
            WITH best AS (
                SELECT fold, acc
                FROM fold_reports
                ORDER BY acc DESC, fold ASC
                LIMIT 1
            )
            SELECT
                COUNT(*)                       AS k,
                AVG(r.acc)                     AS mean_acc,
                MAX(r.acc)                     AS best_acc,
                ANY_VALUE(b.fold)              AS best_fold,
                COALESCE(STDDEV_POP(r.acc), 0) AS std_acc,
                AVG(r.auc)                     AS mean_auc
            FROM fold_reports r, best b
            """
        ).fetchdf()
    finally:
        con.close()


def summarize_runs(runs: pd.DataFrame) -> pd.DataFrame:
    """Per-variant aggregate over seeds, in the order RH, H, R, baseline."""
    _check_columns(runs, RUN_COLUMNS, "run report")
    con = duckdb.connect()
    try:
        con.register("run_reports", runs[RUN_COLUMNS])
        return con.execute(
            """
            SELECT
                variant,
                COUNT(*)                          AS runs,
                AVG(acc)                          AS mean_acc,
                COALESCE(STDDEV_POP(acc), 0)      AS std_acc,
                MAX(acc)                          AS best_acc,
                AVG(auc)                          AS mean_auc,
                COALESCE(STDDEV_POP(auc), 0)      AS std_auc
            FROM run_reports
            GROUP BY variant
            ORDER BY CASE variant
                WHEN 'RH' THEN 0 WHEN 'H' THEN 1 WHEN 'R' THEN 2 WHEN 'baseline' THEN 3 ELSE 4
            END, variant
            """
        ).fetchdf()
    finally:
        con.close()
