"""Append-only metrics CSV with a fixed column set, plus deterministic
aggregation used by the figure-data exporter."""
from __future__ import annotations

import csv
import math
from pathlib import Path

COLUMNS = ["run_id", "method", "env", "lambda", "seed", "phase", "partner_id",
           "timesteps", "mean_score", "mean_D"]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return repr(value)
    return str(value)


class MetricsWriter:
    def __init__(self, path):
        self.path = Path(path)
        new = not self.path.exists()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "a", newline="")
        self._writer = csv.writer(self._fh)
        if new:
            self._writer.writerow(COLUMNS)
            self._fh.flush()

    def write(self, **kw) -> None:
        unknown = set(kw) - set(COLUMNS)
        if unknown:
            raise ValueError(f"unknown metric columns: {sorted(unknown)}")
        self._writer.writerow([_fmt(kw.get(c)) for c in COLUMNS])

    def close(self) -> None:
        self._fh.flush()
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_metrics(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for key in ("lambda", "mean_score", "mean_D"):
            row[key] = float(row[key]) if row[key] not in ("", None) else float("nan")
        for key in ("seed", "timesteps"):
            row[key] = int(row[key]) if row[key] not in ("", None) else -1
    return rows
