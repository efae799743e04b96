"""Step logs, batch CSV summaries and plain-text grid dumps.

Every writer produces byte-identical output for identical inputs: keys are
emitted in a fixed order and floats use a fixed repr.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Iterable

import numpy as np

from .batch import SUMMARY_FIELDS, BatchSummary

GRID_FORMAT = "{:.6f}"


class ExportError(OSError):
    """An output file could not be written; the message names the path."""


def write_text(path: str | Path, text: str) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def _clean(v):
    # json cannot carry nan/inf; numpy scalars are unwrapped
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def jsonl_text(records: Iterable) -> str:
    """One JSON object per motion step, in log order."""
    lines = []
    for rec in records:
        d = rec.to_json() if hasattr(rec, "to_json") else rec
        lines.append(json.dumps(_clean(d), sort_keys=True, separators=(",", ":")))
    return "".join(line + "\n" for line in lines)


def write_jsonl(records: Iterable, path: str | Path) -> Path:
    return write_text(path, jsonl_text(records))


def csv_header() -> list[str]:
    cols = ["variant", "episodes"]
    for m in SUMMARY_FIELDS:
        cols += [f"{m}_mean", f"{m}_stderr"]
    return cols + ["time_fraction_mean", "time_fraction_stderr"]


def summary_csv_text(summary: BatchSummary, time_budget_s: float = 20.0) -> str:
    """Header plus one row per variant, in the order the variants were requested."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(csv_header())
    for name, stats in summary.variants.items():
        row = [name, stats.n]
        for m in SUMMARY_FIELDS:
            row += [f"{stats.mean[m]:.6f}", f"{stats.stderr[m]:.6f}"]
        row += [f"{stats.mean['time_s'] / time_budget_s:.6f}",
                f"{stats.stderr['time_s'] / time_budget_s:.6f}"]
        w.writerow(row)
    return buf.getvalue()


def write_summary_csv(summary: BatchSummary, path: str | Path, time_budget_s: float = 20.0) -> Path:
    return write_text(path, summary_csv_text(summary, time_budget_s))


def grid_text(values) -> str:
    """One line per grid row, whitespace-separated fields."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"grid dump needs a 2-D array, got shape {arr.shape}")
    return "".join(" ".join(GRID_FORMAT.format(v) for v in row) + "\n" for row in arr)


def write_grid(values, path: str | Path) -> Path:
    return write_text(path, grid_text(values))


def dump_layers(log, directory: str | Path, layers=("M_P", "M_O", "M_T", "M_G", "M_C")) -> list[Path]:
    """Write every snapshotted layer of every planning step as ``<layer>_<step>.txt``."""
    out = []
    for i, rec in enumerate(log):
        if not rec.layers:
            continue
        for name in layers:
            out.append(write_grid(rec.layers[name], Path(directory) / f"{name}_{i:05d}.txt"))
    return out
