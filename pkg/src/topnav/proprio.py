"""Proprioceptive feedback: evaluation normalization, the M_P layer, T_P recording, recovery."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Sequence

import numpy as np

from .gridmap import CostGrid, GridSpec, Pose, cell_centers_world, to_robot_frame, wrap_angle
from .planner import VelocityCommand

NORM_CENTER = 2.2
NORM_GAIN = 2.0


@dataclass
class ProprioConfig:
    k_P: float = 0.3
    c_th: float = 0.8
    window_s: float = 1.0
    recovery_threshold: float = 0.5
    backoff_speed: float = 0.5
    backoff_duration_s: float = 0.5
    slow_replan_hz: float = 0.5
    heading_release_rad: float = 0.3
    rearm_s: float = 1.0
    # moving less than stall_distance_m over stall_s while commanded forward counts as blocked
    stall_s: float = 0.5
    stall_distance_m: float = 0.05
    # how long a blocked step stays on the M_P layer, anchored where it happened
    memory_s: float = 4.0


@dataclass(frozen=True)
class MotionEvaluation:
    """One advisor reading.

    ``c_norm`` is the sigmoid of ``c_raw`` before the c_th clamp; consumers that
    feed the planner pass it through :func:`advised`.
    """
    c_raw: float
    c_norm: float
    timestamp_s: float

    @classmethod
    def from_norm(cls, c_norm: float, timestamp_s: float) -> "MotionEvaluation":
        return cls(inverse_norm(c_norm), float(c_norm), timestamp_s)


def norm(c_raw):
    return 1.0 / (1.0 + np.exp(NORM_GAIN * (NORM_CENTER - np.asarray(c_raw, dtype=float))))


def inverse_norm(c_norm: float, eps: float = 1e-9) -> float:
    c = min(max(float(c_norm), eps), 1.0 - eps)
    return NORM_CENTER - math.log((1.0 - c) / c) / NORM_GAIN


def advised(c_norm: float, cfg: ProprioConfig) -> float:
    """Apply the c_th clamp: readings above the threshold count as fully healthy."""
    return 1.0 if c_norm > cfg.c_th else float(c_norm)


def normalize_evaluation(c_raw: float, cfg: ProprioConfig) -> float:
    return advised(float(norm(c_raw)), cfg)


def proprio_cost_map(c_norm: float, spec: GridSpec, k_P: float = 0.3) -> CostGrid:
    """(1 - c_norm) on the robot's lateral row, decaying by exp(-k_P) per lateral cell."""
    if not 0.0 <= c_norm <= 1.0:
        raise ValueError(f"c_norm must lie in [0, 1], got {c_norm}")
    offset = np.abs(np.arange(spec.height_cells) - spec.base_cell[1])
    column = (1.0 - c_norm) / np.exp(k_P * offset)
    return CostGrid(spec, np.repeat(column[:, None], spec.width_cells, axis=1))


def anchored_proprio_map(c_norm: float, anchor: Pose, pose: Pose, spec: GridSpec,
                         k_P: float = 0.3) -> CostGrid:
    """M_P built at ``anchor`` (where the reading was taken) and seen from ``pose``.

    The band stays fixed in the world along the heading of the failed motion, so
    turning away from it does not erase it. Cells outside the anchor window cost 0.
    """
    band = proprio_cost_map(c_norm, spec, k_P).values
    rel = to_robot_frame(cell_centers_world(pose, spec), anchor)
    res = spec.resolution_m
    ix = np.floor(rel[..., 0] / res + 0.5).astype(int) + spec.base_cell[0]
    iy = np.floor(rel[..., 1] / res + 0.5).astype(int) + spec.base_cell[1]
    inside = (ix >= 0) & (ix < spec.width_cells) & (iy >= 0) & (iy < spec.height_cells)
    out = np.zeros(spec.shape)
    out[inside] = band[iy[inside], ix[inside]]
    return CostGrid(spec, out)


def window_evaluation(history: Sequence[MotionEvaluation], now_s: float,
                      cfg: ProprioConfig) -> float | None:
    """Clamped Norm of the mean raw evaluation over the last window; None if empty."""
    lo = now_s - cfg.window_s - 1e-9
    raw = [e.c_raw for e in history if lo < e.timestamp_s <= now_s + 1e-9]
    if not raw:
        return None
    return normalize_evaluation(float(np.mean(raw)), cfg)


def record_traversability(history: Sequence[MotionEvaluation], now_s: float,
                          cfg: ProprioConfig) -> float | None:
    """1 - Norm(mean raw evaluation over the last window); None if the window is empty."""
    c = window_evaluation(history, now_s, cfg)
    return None if c is None else 1.0 - c


class Phase(Enum):
    NORMAL = "normal"
    BACKOFF = "backoff"
    SLOW_REPLAN = "slow_replan"


@dataclass(frozen=True)
class RecoveryState:
    phase: Phase = Phase.NORMAL
    phase_entry_time_s: float = 0.0
    entry_heading: float = 0.0
    # a new trigger needs rearm_s of healthy readings in Normal since the last recovery
    armed: bool = True
    healthy_since_s: float | None = None


def recovery_step(state: RecoveryState, c_norm: float, now_s: float, robot_heading: float,
                  waypoint_reached: bool, cfg: ProprioConfig, blocked: bool = False):
    """Advance the back-off / slow-replan machine by one motion step.

    ``blocked`` (the robot is not moving although commanded to) re-arms the
    trigger at once. Returns ``(state, override, plan_period_override)``.
    """
    healthy = c_norm >= cfg.recovery_threshold
    armed = state.armed
    if state.phase is Phase.NORMAL:
        since = state.healthy_since_s if healthy else None
        if healthy and since is None:
            since = now_s
        if blocked or (since is not None and now_s - since >= cfg.rearm_s - 1e-9):
            armed = True
        if armed and not healthy:
            new = RecoveryState(Phase.BACKOFF, now_s, robot_heading, armed=False)
            return new, VelocityCommand(-cfg.backoff_speed, 0.0), None
        return replace(state, armed=armed, healthy_since_s=since), None, None

    if state.phase is Phase.BACKOFF:
        if now_s - state.phase_entry_time_s >= cfg.backoff_duration_s - 1e-9:
            new = RecoveryState(Phase.SLOW_REPLAN, now_s, robot_heading, armed=armed)
            return new, None, 1.0 / cfg.slow_replan_hz
        return replace(state, armed=armed), VelocityCommand(-cfg.backoff_speed, 0.0), None

    turned = abs(wrap_angle(robot_heading - state.entry_heading)) >= cfg.heading_release_rad
    if waypoint_reached or turned:
        return RecoveryState(Phase.NORMAL, now_s, robot_heading, armed=False), None, None
    return replace(state, armed=armed), None, 1.0 / cfg.slow_replan_hz
