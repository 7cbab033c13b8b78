"""
Writers and readers for experiment output: a CSV time series (one row per
evaluated step) and a JSON summary.
"""

import csv
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple, Union

import numpy as np

from .core import Trajectory

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def format_value(value: float) -> str:
    """17 significant digits: parsing the text gives back the same double."""
    return f"{float(value):.17g}"


def timeseries_header(dim: int, order: int, constants: Sequence[str]) -> List[str]:
    """t, q[0..n-1], q1[..], ..., q{M}[..], then one column per constant."""
    header = ["t"]
    for j in range(order + 1):
        prefix = "q" if j == 0 else f"q{j}"
        header.extend(f"{prefix}[{c}]" for c in range(dim))
    header.extend(constants)
    return header


def timeseries_rows(
    traj: Trajectory, indices: Sequence[int], columns: Dict[str, Sequence[float]]
) -> List[List[float]]:
    """Rows for the sample indices; `columns` holds one value per index."""
    rows = []
    for pos, i in enumerate(indices):
        row = [float(traj.times[i])]
        row.extend(float(x) for x in traj.jets[i].reshape(-1))
        row.extend(float(columns[name][pos]) for name in columns)
        rows.append(row)
    return rows


def write_timeseries(path: PathLike, header: Sequence[str], rows: Sequence[Sequence[float]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"Row has {len(row)} values, header has {len(header)} columns")
            writer.writerow([format_value(v) for v in row])
    logger.info("Wrote %d rows to %s", len(rows), path)
    return path


def read_timeseries(path: PathLike) -> Tuple[List[str], np.ndarray]:
    """Header and a (rows, columns) float array."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        data = [[float(x) for x in row] for row in reader if row]
    return header, np.array(data, dtype=float).reshape(len(data), len(header))


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (np.floating, float)):
        # JSON has no NaN/inf
        return float(value) if math.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def write_summary(path: PathLike, summary: Dict[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(_jsonable(summary), f, indent=2)
    logger.info("Wrote summary to %s", path)
    return path


def read_summary(path: PathLike) -> Dict[str, Any]:
    with open(path) as f:
        return json.load(f)
