"""CSV serialisation of traces, logs and summaries.

Column names carry their unit as a suffix. Floats are written with ``repr``
so a round trip through :func:`read_trace_csv` is lossless.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, is_dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .engine import Metrics, SimTrace

DISPATCH_COLUMNS = ("time_s", "unit_id", "p_set_mw", "reserve_mw", "status", "objective")
CONTROLLER_COLUMNS = ("time_s", "unit_id", "dp_cmd_pu", "saturated")
EVENT_COLUMNS = ("time_s", "event")
STEP_COLUMNS = ("time_s", "v_mps", "dp_ref", "dp_normalized")
STEP_SUMMARY_COLUMNS = ("v_mps", "dp_ref", "final_normalized", "settling_time_s", "infeasible", "speed_limited")
OFFER_COLUMNS = ("period", "offer_mw", "worst_case_revenue")
METRIC_COLUMNS = ("nadir_hz", "rocof_max_hz_s", "settling_time_s", "steady_state_dev_hz",
                  "unserved_energy_mwh", "initial_rocof_hz_s")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_rows(path: str | Path, columns: Sequence[str], rows: Iterable) -> Path:
    """Write dict rows (or sequences) under a fixed header."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            if isinstance(row, dict):
                row = [row[c] for c in columns]
            w.writerow([_fmt(v) for v in row])
    return path


def read_rows(path: str | Path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def write_trace_csv(trace: SimTrace, path: str | Path) -> Path:
    names = list(trace.columns)
    data = np.column_stack([trace.columns[n] for n in names])
    return write_rows(path, names, data.tolist())


def read_trace_csv(path: str | Path, events_path: str | Path | None = None) -> SimTrace:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        names = next(reader)
        data = np.array([[float(x) for x in row] for row in reader], dtype=float).reshape(-1, len(names))
    events = []
    if events_path is not None and Path(events_path).exists():
        events = [(float(r["time_s"]), r["event"]) for r in read_rows(events_path)]
    return SimTrace({n: data[:, j].copy() for j, n in enumerate(names)}, events)


def write_metrics_csv(m: Metrics, path: str | Path) -> Path:
    d = asdict(m)
    return write_rows(path, METRIC_COLUMNS, [[d[c] for c in METRIC_COLUMNS]])


def write_json(obj, path: str | Path) -> Path:
    def default(o):
        if is_dataclass(o):
            return asdict(o)
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        if isinstance(o, Path):
            return str(o)
        return str(o)

    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=default) + "\n")
    return path
