"""
Result writers

CSV is UTF-8 with a header row and ``repr`` floats, so the same run always gives the
same bytes. Missing values are written as empty cells.
"""
from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .config import json_safe
from .exceptions import ConfigurationError
from .model import Sample, State


logger = logging.getLogger(__name__)


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return repr(value)
    return str(value)


def ensure_dir(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigurationError(f"Output directory {path} is not writable: {e}") from e
    return path


def write_rows(path: Path, columns: Sequence[str], rows: Iterable[Sequence[Any]]):
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(value) for value in row])
    logger.info("Wrote %s", path)


def write_trajectory_csv(path: Path, samples: Iterable[Sample]):
    write_rows(path, Sample.COLUMNS, (sample.as_row() for sample in samples))


def read_trajectory_csv(path: Path) -> list[dict[str, float | None]]:
    with path.open(newline="", encoding="utf-8") as f:
        return [
            {key: float(val) if val != "" else None for key, val in row.items()}
            for row in csv.DictReader(f)
        ]


def write_summary_json(path: Path, data: dict[str, Any]):
    path.write_text(
        json.dumps(json_safe(data), indent=2, allow_nan=False) + "\n", encoding="utf-8"
    )
    logger.info("Wrote %s", path)


def write_sweep_csv(path: Path, columns: Sequence[str], rows: list[dict[str, Any]]):
    """
    One row per sweep point, ordered by point index whatever order they finished in
    """
    ordered = sorted(rows, key=lambda row: row["index"])
    write_rows(path, columns, ([row.get(col) for col in columns] for row in ordered))


def save_snapshots(path: Path, states: Sequence[State]):
    if not states:
        raise ConfigurationError("No snapshots to save")
    np.savez_compressed(
        path,
        t=np.array([state.t for state in states]),
        u=np.stack([state.u.values for state in states]),
        v=np.stack([state.v.values for state in states]),
    )
    logger.info("Wrote %d snapshots to %s", len(states), path)


def load_snapshots(path: Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Return ``(t, u, v)`` with the time index first
    """
    if not path.exists():
        raise ConfigurationError(f"Snapshot file {path} not found")
    with np.load(path) as data:
        return data["t"], data["u"], data["v"]
