"""Robot-centric grid window geometry.

The window is re-anchored on the robot and aligned with its heading at every
planning step. Cell ``(ix, iy)`` has ``ix`` along the forward axis and ``iy``
along the lateral axis (left positive). Layer values are stored as arrays of
shape ``(height_cells, width_cells)`` indexed ``values[iy, ix]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np

Cell = tuple[int, int]


class Pose(NamedTuple):
    x: float
    y: float
    yaw: float


def wrap_angle(a):
    """Wrap an angle (scalar or array) into (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + np.pi, 2 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    if np.ndim(w) == 0:
        return float(w)
    return w


@dataclass(frozen=True)
class GridSpec:
    width_cells: int
    height_cells: int
    resolution_m: float
    base_cell: Cell

    def __post_init__(self):
        if not self.resolution_m > 0:
            raise ValueError(f"resolution must be positive, got {self.resolution_m}")
        if self.width_cells < 2 or self.height_cells < 2:
            raise ValueError("window needs at least 2x2 cells")
        bx, by = self.base_cell
        if not (0 <= bx < self.width_cells and 0 <= by < self.height_cells):
            raise ValueError(f"base cell {self.base_cell} outside window")

    @classmethod
    def from_extent(cls, forward_m: float, lateral_m: float,
                    base_m: tuple[float, float], resolution_m: float) -> "GridSpec":
        """Build a spec from metric window extents and the robot anchor."""
        return cls(
            width_cells=int(round(forward_m / resolution_m)),
            height_cells=int(round(lateral_m / resolution_m)),
            resolution_m=resolution_m,
            base_cell=(int(round(base_m[0] / resolution_m)), int(round(base_m[1] / resolution_m))),
        )

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height_cells, self.width_cells)

    def in_bounds(self, cell: Cell) -> bool:
        ix, iy = cell
        return 0 <= ix < self.width_cells and 0 <= iy < self.height_cells


SIM_GRID = GridSpec.from_extent(1.2, 1.5, (0.45, 0.75), 0.15)
REAL_GRID = GridSpec.from_extent(3.0, 3.0, (0.0, 1.5), 0.15)
GRID_PRESETS = {"sim": SIM_GRID, "real": REAL_GRID}


class NonFiniteCost(ValueError):
    pass


@dataclass
class CostGrid:
    spec: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.spec.shape:
            raise ValueError(f"values shape {self.values.shape} != {self.spec.shape}")
        if not np.all(np.isfinite(self.values)):
            raise NonFiniteCost("cost grid contains non-finite values")

    @classmethod
    def zeros(cls, spec: GridSpec) -> "CostGrid":
        return cls(spec, np.zeros(spec.shape))

    def at(self, cell: Cell) -> float:
        return float(self.values[cell[1], cell[0]])


def _round_half_up(v):
    return np.floor(np.asarray(v) + 0.5).astype(int)


def to_robot_frame(p_world, pose: Pose) -> np.ndarray:
    """Express world points (..., 2) in the robot frame (forward, lateral)."""
    p = np.asarray(p_world, dtype=float)
    d = p - np.array([pose.x, pose.y])
    c, s = math.cos(pose.yaw), math.sin(pose.yaw)
    fwd = c * d[..., 0] + s * d[..., 1]
    lat = -s * d[..., 0] + c * d[..., 1]
    return np.stack([fwd, lat], axis=-1)


def to_world_frame(p_robot, pose: Pose) -> np.ndarray:
    p = np.asarray(p_robot, dtype=float)
    c, s = math.cos(pose.yaw), math.sin(pose.yaw)
    x = pose.x + c * p[..., 0] - s * p[..., 1]
    y = pose.y + s * p[..., 0] + c * p[..., 1]
    return np.stack([x, y], axis=-1)


def world_to_cell(p_world, pose: Pose, spec: GridSpec) -> Cell | None:
    """Cell containing a world point, or None when it falls outside the window."""
    fwd, lat = to_robot_frame(p_world, pose)
    res = spec.resolution_m
    ix = int(_round_half_up(fwd / res)) + spec.base_cell[0]
    iy = int(_round_half_up(lat / res)) + spec.base_cell[1]
    if not spec.in_bounds((ix, iy)):
        return None
    return (ix, iy)


def cell_offset(cell: Cell, spec: GridSpec) -> tuple[float, float]:
    """Cell center in the robot frame, meters."""
    res = spec.resolution_m
    return ((cell[0] - spec.base_cell[0]) * res, (cell[1] - spec.base_cell[1]) * res)


def cell_to_world(cell: Cell, pose: Pose, spec: GridSpec) -> np.ndarray:
    if not spec.in_bounds(cell):
        raise ValueError(f"cell {cell} outside window {spec.width_cells}x{spec.height_cells}")
    return to_world_frame(np.array(cell_offset(cell, spec)), pose)


@lru_cache(maxsize=16)
def _robot_frame_centers(spec: GridSpec) -> np.ndarray:
    res = spec.resolution_m
    ix = (np.arange(spec.width_cells) - spec.base_cell[0]) * res
    iy = (np.arange(spec.height_cells) - spec.base_cell[1]) * res
    fwd, lat = np.meshgrid(ix, iy)
    out = np.stack([fwd, lat], axis=-1)
    out.setflags(write=False)
    return out


def cell_centers_robot(spec: GridSpec) -> np.ndarray:
    """Array (H, W, 2) of cell centers in the robot frame."""
    return _robot_frame_centers(spec)


def cell_centers_world(pose: Pose, spec: GridSpec) -> np.ndarray:
    """Array (H, W, 2) of cell centers in the world frame."""
    return to_world_frame(_robot_frame_centers(spec), pose)


def raster_line(c0: Cell, c1: Cell) -> list[Cell]:
    """8-connected integer line from c0 to c1, endpoints included.

    Minor-axis coordinates are rounded half away from zero along the major
    axis. The walk always runs from the lexicographically smaller endpoint,
    so both directions cover the same cells.
    """
    c0 = (int(c0[0]), int(c0[1]))
    c1 = (int(c1[0]), int(c1[1]))
    if c1 < c0:
        return raster_line(c1, c0)[::-1]
    dx, dy = c1[0] - c0[0], c1[1] - c0[1]
    n = max(abs(dx), abs(dy))
    if n == 0:
        return [c0]
    sx = 1 if dx >= 0 else -1
    sy = 1 if dy >= 0 else -1
    ax, ay = abs(dx), abs(dy)
    cells = []
    for t in range(n + 1):
        ox = (2 * t * ax + n) // (2 * n)
        oy = (2 * t * ay + n) // (2 * n)
        cells.append((c0[0] + sx * ox, c0[1] + sy * oy))
    return cells


def boundary_cells(spec: GridSpec) -> list[Cell]:
    """Edge cells of the window in row-major order."""
    W, H = spec.width_cells, spec.height_cells
    return [(ix, iy) for iy in range(H) for ix in range(W)
            if ix in (0, W - 1) or iy in (0, H - 1)]
