"""
Dataset Output Module

Writes tables (CSV) and reports (JSON). Every file starts with the schema
version, the scenario config hash and the seed so results can always be
traced back to the run that produced them.
"""

import json
import logging
import shutil
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from noise_mc import Dataset

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

SHOT_COLUMNS = [
    "shot_index", "seed", "theta", "true_N", "N1_detected", "N2_detected",
    "n_raw", "n", "m", "tech_phase", "meanfield_phase", "clamped", "corrected",
]

SHOT_UNITS = {
    "theta": "rad",
    "true_N": "atoms",
    "N1_detected": "atoms",
    "N2_detected": "atoms",
    "m": "atoms/2",
    "tech_phase": "rad",
    "meanfield_phase": "rad",
}

PathLike = Union[str, Path]


def run_metadata(config_hash: str, seed: int, **extra) -> Dict[str, object]:
    meta = {"schema_version": SCHEMA_VERSION, "config_hash": config_hash, "seed": int(seed)}
    meta.update(extra)
    return meta


def _ordered(df: pd.DataFrame, col_order: Optional[List[str]]) -> pd.DataFrame:
    if not col_order:
        return df
    col_order = [c for c in col_order if c in df.columns]
    remaining = [c for c in df.columns if c not in col_order]
    return df[col_order + remaining]


def write_table(
    df: pd.DataFrame,
    path: PathLike,
    meta: Dict[str, object],
    col_order: Optional[List[str]] = None,
    units: Optional[Dict[str, str]] = None,
    label: str = "rows",
) -> Path:
    """
    Write a table with a commented header block.

    Args:
        df: table to write
        path: CSV path; parent directories are created
        meta: run metadata (schema_version, config_hash, seed, ...)
        col_order: preferred leading columns
        units: column -> unit string, listed in the header
        label: noun used in the confirmation line

    Returns:
        The written path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df = _ordered(df, col_order)
    with open(path, "w", newline="") as f:
        for key, value in meta.items():
            f.write(f"# {key}: {value}\n")
        if units:
            listed = ", ".join(f"{c}={u}" for c, u in units.items() if c in df.columns)
            f.write(f"# units: {listed}\n")
        df.to_csv(f, index=False, lineterminator="\n")
    print(f"Wrote {len(df)} {label} to {path}")
    return path


def read_table(path: PathLike) -> Tuple[pd.DataFrame, Dict[str, str]]:
    """Inverse of write_table: (table, header metadata as strings)."""
    meta: Dict[str, str] = {}
    header_lines = 0
    with open(path) as f:
        for line in f:
            if not line.startswith("# "):
                break
            key, _, value = line[2:].rstrip("\n").partition(": ")
            meta[key] = value
            header_lines += 1
    return pd.read_csv(path, skiprows=header_lines), meta


def write_dataset(dataset: Dataset, path: PathLike, meta: Dict[str, object]) -> Path:
    return write_table(dataset.to_frame(), path, meta, SHOT_COLUMNS, SHOT_UNITS, label="shots")


def write_datasets(
    parts: Sequence[Tuple[Dict[str, object], Dataset]],
    path: PathLike,
    meta: Dict[str, object],
    units: Optional[Dict[str, str]] = None,
) -> Path:
    """Several datasets in one shot table, each row tagged with its part's labels."""
    if not parts:
        raise ValueError("no datasets to write")
    frames = [data.to_frame().assign(**labels) for labels, data in parts]
    labels = list(parts[0][0])
    all_units = dict(units or {})
    all_units.update(SHOT_UNITS)
    return write_table(pd.concat(frames, ignore_index=True), path, meta,
                       labels + SHOT_COLUMNS, all_units, label="shots")


def _json_default(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


def _finite_or_none(value):
    if isinstance(value, dict):
        return {k: _finite_or_none(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite_or_none(v) for v in value]
    if isinstance(value, (float, np.floating)) and not np.isfinite(value):
        return None
    return value


def write_report(report: Dict[str, object], path: PathLike, meta: Dict[str, object]) -> Path:
    """JSON report with the run metadata first; non-finite numbers become null."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = dict(meta)
    doc.update(_finite_or_none(report))
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=False, default=_json_default)
        f.write("\n")
    print(f"Wrote report to {path}")
    return path


def quarantine(out_dir: PathLike, scenario: str) -> Optional[Path]:
    """Move a failed run's partial outputs to <out>/quarantine/<scenario>/."""
    source = Path(out_dir) / scenario
    if not source.exists():
        return None
    target = Path(out_dir) / "quarantine" / scenario
    if target.exists():
        shutil.rmtree(target)
    target.parent.mkdir(parents=True, exist_ok=True)
    shutil.move(str(source), str(target))
    log.warning("Moved partial outputs of %s to %s", scenario, target)
    return target
