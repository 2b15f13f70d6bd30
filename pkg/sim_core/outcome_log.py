import os
from datetime import datetime
from pathlib import Path
from typing import Mapping

import pandas as pd

from shared.logging_utils import log_success
from sim_core.errors import ManifestMismatchError


def write_table(df: pd.DataFrame, path, manifest_hash: str | None = None) -> Path:
    """
    Write a result table as CSV, stamping every row with the run's manifest hash.
    """
    path = Path(path)
    os.makedirs(path.parent, exist_ok=True)
    out = df.copy()
    if manifest_hash is not None:
        out["manifest_hash"] = manifest_hash
    out.to_csv(path, index=False)
    return path


def read_table(path) -> pd.DataFrame:
    return pd.read_csv(path, keep_default_na=False, na_values=["", "nan", "NaN"], float_precision="round_trip")


def table_manifest_hash(path) -> str | None:
    """Manifest hash carried by a result table, or None if the table has none (or no rows).

    Rows stamped by different runs raise ManifestMismatchError.
    """
    df = pd.read_csv(path, usecols=lambda c: c == "manifest_hash", dtype=str)
    if "manifest_hash" not in df.columns or df.empty:
        return None
    values = set(df["manifest_hash"].dropna())
    if len(values) > 1:
        raise ManifestMismatchError(f"{Path(path).name} mixes rows from runs {', '.join(sorted(values))}")
    return values.pop() if values else None


def log_run(log_path, summary: Mapping) -> Path:
    """
    Append a single run summary to the run log CSV.
    """
    log_path = Path(log_path)
    os.makedirs(log_path.parent, exist_ok=True)

    run_data = {"timestamp": datetime.now().isoformat(timespec="seconds"), **dict(summary)}

    df = pd.DataFrame([run_data])
    if log_path.exists():
        existing = pd.read_csv(log_path, nrows=0).columns.tolist()
        if existing == df.columns.tolist():
            df.to_csv(log_path, mode='a', header=False, index=False)
        else:
            pd.concat([pd.read_csv(log_path), df], ignore_index=True).to_csv(log_path, index=False)
    else:
        df.to_csv(log_path, index=False)

    log_success(f"Run logged: {summary.get('command', '?')} | events: {summary.get('n_events', '?')}", "outcome_log")
    return log_path
