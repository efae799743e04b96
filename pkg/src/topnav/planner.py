"""Goal and obstacle layers, costmap fusion, waypoint selection and command shaping."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .gridmap import (
    Cell, CostGrid, GridSpec, Pose, boundary_cells, cell_centers_robot,
    cell_centers_world, cell_offset, raster_line, wrap_angle,
)

# relative tolerance under which two path costs count as tied
TIE_RTOL = 1e-12


@dataclass
class PlannerConfig:
    d_0: float = 0.5
    t_0: float = 0.5
    k_T1: float = 1.0
    k_T2: float = 2.0
    k_G0: float = 0.1
    k_G1: float = 0.4
    k_G2: float = -10.0
    v_0: float = 0.5
    k_yaw: float = 1.0
    d_max: float = 0.3
    plan_period_s: float = 1.0 / 3.0
    time_budget_s: float = 20.0
    path_cost_mode: str = "mean"  # "mean" (per cell) or "euclidean" (per meter)
    # paths within this fraction of the goal weight alpha_G of the best cost count as
    # tied; applied by the episode loop
    heading_tie_tolerance: float = 0.0
    # among tolerance ties: "heading" keeps the smallest turn, "goal" points closest to the
    # goal, "previous" points closest to the last waypoint so the robot commits to one side,
    # "commit" behaves as "previous" while a blockage is remembered and as "heading" otherwise
    tie_preference: str = "heading"


TIE_PREFERENCES = ("heading", "goal", "previous", "commit")
PATH_COST_MODES = ("mean", "euclidean")


class GoalMode(Enum):
    POINT = "point"
    DIRECTION = "direction"


@dataclass(frozen=True)
class Goal:
    mode: GoalMode
    p_goal: tuple[float, float] | None = None
    r_goal: float | None = None

    def __post_init__(self):
        if self.mode is GoalMode.POINT and (self.p_goal is None or self.r_goal is not None):
            raise ValueError("point goal needs p_goal only")
        if self.mode is GoalMode.DIRECTION and (self.r_goal is None or self.p_goal is not None):
            raise ValueError("direction goal needs r_goal only")

    @classmethod
    def point(cls, x: float, y: float) -> "Goal":
        return cls(GoalMode.POINT, p_goal=(float(x), float(y)))

    @classmethod
    def direction(cls, r: float) -> "Goal":
        return cls(GoalMode.DIRECTION, r_goal=float(r))


@dataclass(frozen=True)
class VelocityCommand:
    """Linear speed and heading change. Recovery overrides may carry v_lin < 0."""
    v_lin: float
    delta_yaw: float


def _minmax(values: np.ndarray) -> np.ndarray:
    lo, hi = values.min(), values.max()
    if hi - lo <= 0:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def goal_cost_map(goal: Goal, pose: Pose, spec: GridSpec, normalize: bool = True) -> CostGrid:
    if goal.mode is GoalMode.POINT:
        centers = cell_centers_world(pose, spec)
        raw = np.hypot(centers[..., 0] - goal.p_goal[0], centers[..., 1] - goal.p_goal[1])
    else:
        rel = cell_centers_robot(spec)
        bearing = pose.yaw + np.arctan2(rel[..., 1], rel[..., 0])
        raw = np.abs(wrap_angle(goal.r_goal - bearing))
        bx, by = spec.base_cell
        raw[by, bx] = 0.0
    return CostGrid(spec, _minmax(raw) if normalize else raw)


def obstacle_cost_map(points, pose: Pose, spec: GridSpec, d_max: float) -> CostGrid:
    """Linear falloff max(0, d_max - dist) / d_max to the nearest obstacle point."""
    if d_max <= 0:
        raise ValueError("d_max must be positive")
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        return CostGrid.zeros(spec)
    centers = cell_centers_world(pose, spec).reshape(-1, 1, 2)
    dist = np.sqrt(((centers - pts[None, :, :]) ** 2).sum(-1)).min(axis=1)
    cost = np.maximum(0.0, d_max - dist) / d_max
    return CostGrid(spec, cost.reshape(spec.shape))


def alpha_terrain(d: float, cfg: PlannerConfig) -> float:
    return cfg.k_T1 / (1.0 + math.exp(-cfg.k_T2 * (d - cfg.d_0)))


def alpha_goal(t: float, cfg: PlannerConfig) -> float:
    return cfg.k_G1 / (1.0 + math.exp(-cfg.k_G2 * (t - cfg.t_0))) + cfg.k_G0


def combine(m_p: CostGrid, m_o: CostGrid, m_t: CostGrid, m_g: CostGrid,
            alpha_t: float, alpha_g: float) -> CostGrid:
    spec = m_p.spec
    for g in (m_o, m_t, m_g):
        if g.spec != spec:
            raise ValueError("layers do not share one grid spec")
    return CostGrid(spec, m_p.values + m_o.values + alpha_t * m_t.values + alpha_g * m_g.values)


@lru_cache(maxsize=16)
def _boundary_paths(spec: GridSpec):
    """Per boundary cell: flat path indices, metric length, |heading|, row-major index."""
    base = spec.base_cell
    W = spec.width_cells
    cells = [e for e in boundary_cells(spec) if e != base]
    paths = []
    for e in cells:
        line = raster_line(base, e)
        paths.append(np.array([iy * W + ix for ix, iy in line]))
    fwd_lat = np.array([cell_offset(e, spec) for e in cells])
    length = np.hypot(fwd_lat[:, 0], fwd_lat[:, 1])
    heading = np.abs(np.arctan2(fwd_lat[:, 1], fwd_lat[:, 0]))
    index = np.array([iy * W + ix for ix, iy in cells])
    return cells, paths, length, heading, index


def path_costs(m_c: CostGrid, mode: str = "mean") -> tuple[list[Cell], np.ndarray]:
    """Path cost from the base cell to every boundary cell."""
    cells, paths, length, _, _ = _boundary_paths(m_c.spec)
    flat = m_c.values.ravel()
    sums = np.array([flat[p].sum() for p in paths])
    if mode == "mean":
        costs = sums / np.array([len(p) for p in paths])
    elif mode == "euclidean":
        costs = sums / length
    else:
        raise ValueError(f"unknown path cost mode {mode!r}")
    return cells, costs


def select_waypoint(m_c: CostGrid, spec: GridSpec | None = None, mode: str = "mean",
                    tie_tolerance: float = 0.0, prefer_heading: float | None = None) -> Cell:
    """Boundary cell with the lowest path cost.

    Ties (within a relative 1e-12, widened by ``tie_tolerance`` in cost units)
    go to the smallest heading change, then the smallest row-major index. With
    ``prefer_heading`` (robot frame, radians) tied cells are first ranked by
    their angular distance to it.
    """
    if spec is not None and spec != m_c.spec:
        raise ValueError("grid spec mismatch")
    cells, costs = path_costs(m_c, mode)
    _, _, _, heading, index = _boundary_paths(m_c.spec)
    best = costs.min()
    tied = np.flatnonzero(costs <= best + tie_tolerance + TIE_RTOL * max(1.0, abs(best)))
    keys = [index[tied], heading[tied]]
    if prefer_heading is not None:
        signed = _signed_headings(m_c.spec)[tied]
        keys.append(np.abs(np.angle(np.exp(1j * (signed - prefer_heading)))))
    order = np.lexsort(keys)
    return cells[tied[order[0]]]


@lru_cache(maxsize=16)
def _signed_headings(spec: GridSpec) -> np.ndarray:
    cells = _boundary_paths(spec)[0]
    fwd_lat = np.array([cell_offset(e, spec) for e in cells])
    return np.arctan2(fwd_lat[:, 1], fwd_lat[:, 0])


def velocity_command(waypoint: Cell, pose: Pose, spec: GridSpec, cfg: PlannerConfig) -> VelocityCommand:
    fwd, lat = cell_offset(waypoint, spec)
    if fwd == 0 and lat == 0:
        return VelocityCommand(cfg.v_0, 0.0)
    dyaw = wrap_angle(math.atan2(lat, fwd))
    return command_for_heading(dyaw, cfg)


def command_for_heading(delta_yaw: float, cfg: PlannerConfig) -> VelocityCommand:
    delta_yaw = wrap_angle(delta_yaw)
    return VelocityCommand(cfg.v_0 * math.exp(-cfg.k_yaw * abs(delta_yaw)), delta_yaw)
