"""Plain-CSV table emission with lossless float round-trip.

Every table the sweep machinery writes goes through here: UTF-8, one
header row, comma separator, '.' decimal point, floats at 17 significant
digits so a re-read reproduces the binary values exactly. Writes are
atomic (temp file + rename) so an interrupted sweep never leaves a
half-written cell behind.
"""

from __future__ import annotations

import csv
import os
import tempfile
from pathlib import Path

import numpy as np

__all__ = ["format_value", "write_table", "read_table"]


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_table(path, header, rows) -> Path:
    """Write rows (any iterable of records) under a header row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in rows:
                writer.writerow([format_value(v) for v in row])
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def read_table(path) -> tuple[list[str], np.ndarray]:
    """Header and a float matrix; empty tables give a (0, len(header)) array."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    data = np.array(rows, dtype=float) if rows else np.empty((0, len(header)))
    return header, data
