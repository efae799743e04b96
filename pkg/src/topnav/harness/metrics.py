"""Episode metrics computed from the per-step log."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

VFT_GAP = 0.2
UT_THRESHOLD = 0.5
TD_CELL_M = 0.15


def compute_metrics(step_log: Sequence) -> dict:
    """TD over distinct visited cells, VFT and UT-proxy over motion steps.

    Each log entry needs ``x, y, v_cmd, v_actual, c_norm, collided, difficulty``.
    """
    if len(step_log) == 0:
        raise ValueError("empty step log")
    seen: dict[tuple[int, int], float] = {}
    for r in step_log:
        key = (math.floor(r.x / TD_CELL_M), math.floor(r.y / TD_CELL_M))
        if key not in seen:
            seen[key] = r.difficulty
    gap = np.array([abs(r.v_cmd - r.v_actual) for r in step_log])
    c = np.array([r.c_norm for r in step_log])
    collided = np.array([r.collided for r in step_log], dtype=int)
    onsets = int(collided[0] + np.count_nonzero(np.diff(collided) == 1))
    return {
        "td_percent": 100.0 * float(np.mean(list(seen.values()))),
        "vft_percent": 100.0 * float(np.mean(gap > VFT_GAP)),
        "ut_proxy_percent": 100.0 * float(np.mean(c < UT_THRESHOLD)),
        "collisions": onsets,
    }
