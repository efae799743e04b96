"""Deterministic 2D navigation cell: world generation, unicycle kinematics,
synthetic sensing and the calibrated motion-evaluation model."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from .gridmap import GridSpec, Pose, to_robot_frame, wrap_angle
from .planner import VelocityCommand
from .proprio import MotionEvaluation
from .terrain import SIM_CLASS_NAMES, SIM_LEVELS, FeatureBank

NOVEL_CLASS = "novel"
WORLD_CLASS_NAMES = SIM_CLASS_NAMES + (NOVEL_CLASS,)
OUTSIDE_CLASS = len(SIM_LEVELS) - 1
OUTSIDE_DIFFICULTY = SIM_LEVELS[-1]


class GenerationFailed(RuntimeError):
    def __init__(self, seed: int, reason: str):
        super().__init__(f"world generation failed for seed {seed}: {reason}")
        self.seed = seed


@dataclass(frozen=True)
class Wall:
    """Rectangle given by center, half extents and orientation."""
    center: tuple[float, float]
    half_length: float
    half_width: float
    angle: float = 0.0
    visible: bool = True
    kind: str = "wall"

    def _local(self, px, py):
        c, s = math.cos(self.angle), math.sin(self.angle)
        dx, dy = px - self.center[0], py - self.center[1]
        return c * dx + s * dy, -s * dx + c * dy

    def signed_distance(self, px: float, py: float) -> float:
        u, v = self._local(px, py)
        qx, qy = abs(u) - self.half_length, abs(v) - self.half_width
        outside = math.hypot(max(qx, 0.0), max(qy, 0.0))
        return outside + min(max(qx, qy), 0.0)

    def boundary_points(self, step: float) -> np.ndarray:
        hl, hw = self.half_length, self.half_width
        corners = [(-hl, -hw), (hl, -hw), (hl, hw), (-hl, hw), (-hl, -hw)]
        pts = []
        for (x0, y0), (x1, y1) in zip(corners[:-1], corners[1:]):
            n = max(1, int(math.ceil(math.hypot(x1 - x0, y1 - y0) / step)))
            t = np.arange(n) / n
            pts.append(np.stack([x0 + t * (x1 - x0), y0 + t * (y1 - y0)], axis=1))
        local = np.concatenate(pts)
        c, s = math.cos(self.angle), math.sin(self.angle)
        return np.stack([self.center[0] + c * local[:, 0] - s * local[:, 1],
                         self.center[1] + s * local[:, 0] + c * local[:, 1]], axis=1)

    def entry_parameter(self, origin: np.ndarray, targets: np.ndarray) -> np.ndarray:
        """Segment parameter t in [0, 1] where origin->target first enters; inf if never."""
        c, s = math.cos(self.angle), math.sin(self.angle)
        o = np.array(self._local(origin[0], origin[1]))
        d = targets - origin
        dl = np.stack([c * d[:, 0] + s * d[:, 1], -s * d[:, 0] + c * d[:, 1]], axis=1)
        tmin = np.zeros(len(targets))
        tmax = np.ones(len(targets))
        for axis, h in ((0, self.half_length), (1, self.half_width)):
            dd = dl[:, axis]
            with np.errstate(divide="ignore", invalid="ignore"):
                t1 = (-h - o[axis]) / dd
                t2 = (h - o[axis]) / dd
            par = dd == 0
            lo = np.where(par, np.where(abs(o[axis]) <= h, -np.inf, np.inf), np.minimum(t1, t2))
            hi = np.where(par, np.where(abs(o[axis]) <= h, np.inf, -np.inf), np.maximum(t1, t2))
            tmin = np.maximum(tmin, lo)
            tmax = np.minimum(tmax, hi)
        return np.where(tmin <= tmax, tmin, np.inf)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "wall", "center": list(self.center), "half_length": self.half_length,
                "half_width": self.half_width, "angle": self.angle, "visible": self.visible}


@dataclass(frozen=True)
class Column:
    center: tuple[float, float]
    radius: float
    visible: bool = True
    kind: str = "column"

    def signed_distance(self, px: float, py: float) -> float:
        return math.hypot(px - self.center[0], py - self.center[1]) - self.radius

    def boundary_points(self, step: float) -> np.ndarray:
        n = max(8, int(math.ceil(2 * math.pi * self.radius / step)))
        a = 2 * math.pi * np.arange(n) / n
        return np.stack([self.center[0] + self.radius * np.cos(a),
                         self.center[1] + self.radius * np.sin(a)], axis=1)

    def entry_parameter(self, origin: np.ndarray, targets: np.ndarray) -> np.ndarray:
        d = targets - origin
        f = origin - np.asarray(self.center)
        a = (d ** 2).sum(1)
        b = 2 * (d @ f)
        c = f @ f - self.radius ** 2
        disc = b * b - 4 * a * c
        with np.errstate(invalid="ignore", divide="ignore"):
            t = (-b - np.sqrt(disc)) / (2 * a)
        t = np.where(c <= 0, 0.0, t)
        ok = (disc > 0) & (t <= 1.0) & (t >= 0.0)
        return np.where(ok, t, np.inf)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "column", "center": list(self.center), "radius": self.radius,
                "visible": self.visible}


def obstacle_from_dict(d: dict[str, Any]):
    if d["kind"] == "wall":
        return Wall(tuple(d["center"]), d["half_length"], d["half_width"], d["angle"], d["visible"])
    if d["kind"] == "column":
        return Column(tuple(d["center"]), d["radius"], d["visible"])
    raise ValueError(f"unknown obstacle kind {d['kind']!r}")


@dataclass
class WorldModel:
    difficulty: np.ndarray          # (n, n) indexed [row=y, col=x]
    terrain_class: np.ndarray       # (n, n) index into class_names
    obstacles: list
    start: Pose
    goal: tuple[float, float]
    seed: int
    extent_m: float = 5.0
    section_m: float = 1.0
    class_names: tuple[str, ...] = WORLD_CLASS_NAMES
    annotations: dict[str, Any] = field(default_factory=dict)

    def _section(self, x: float, y: float) -> tuple[int, int] | None:
        n = self.difficulty.shape[0]
        col = int(math.floor(x / self.section_m))
        row = int(math.floor(y / self.section_m))
        if 0 <= col < n and 0 <= row < n:
            return row, col
        return None

    # ground beyond the cell edge behaves like the hardest level
    def difficulty_at(self, x: float, y: float) -> float:
        sec = self._section(x, y)
        return OUTSIDE_DIFFICULTY if sec is None else float(self.difficulty[sec])

    def class_at(self, x: float, y: float) -> int:
        sec = self._section(x, y)
        return OUTSIDE_CLASS if sec is None else int(self.terrain_class[sec])

    def class_indices(self, points: np.ndarray) -> np.ndarray:
        n = self.difficulty.shape[0]
        col = np.floor(points[:, 0] / self.section_m).astype(int)
        row = np.floor(points[:, 1] / self.section_m).astype(int)
        inside = (col >= 0) & (col < n) & (row >= 0) & (row < n)
        out = np.full(len(points), OUTSIDE_CLASS, dtype=int)
        out[inside] = self.terrain_class[row[inside], col[inside]]
        return out

    def clearance(self, x: float, y: float) -> float:
        """Signed distance to the nearest obstacle (visible or not)."""
        if not self.obstacles:
            return math.inf
        return min(o.signed_distance(x, y) for o in self.obstacles)

    def to_dict(self) -> dict[str, Any]:
        return {
            "seed": int(self.seed),
            "extent_m": self.extent_m,
            "section_m": self.section_m,
            "class_names": list(self.class_names),
            "tiles": {
                "difficulty": self.difficulty.tolist(),
                "terrain_class": self.terrain_class.tolist(),
            },
            "obstacles": [o.to_dict() for o in self.obstacles],
            "start": {"x": self.start.x, "y": self.start.y, "yaw": self.start.yaw},
            "goal": {"x": self.goal[0], "y": self.goal[1]},
            "annotations": self.annotations,
        }

    def to_text(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "WorldModel":
        return cls(
            difficulty=np.array(d["tiles"]["difficulty"], dtype=float),
            terrain_class=np.array(d["tiles"]["terrain_class"], dtype=int),
            obstacles=[obstacle_from_dict(o) for o in d["obstacles"]],
            start=Pose(d["start"]["x"], d["start"]["y"], d["start"]["yaw"]),
            goal=(d["goal"]["x"], d["goal"]["y"]),
            seed=d["seed"],
            extent_m=d["extent_m"],
            section_m=d["section_m"],
            class_names=tuple(d["class_names"]),
            annotations=d.get("annotations", {}),
        )

    @classmethod
    def from_text(cls, text: str) -> "WorldModel":
        return cls.from_dict(json.loads(text))


_PAIR_BATCH = 256


@dataclass
class GenConfig:
    extent_m: float = 5.0
    section_m: float = 1.0
    n_walls: int = 1
    n_columns: int = 2
    wall_length_m: tuple[float, float] = (1.0, 2.0)
    wall_thickness_m: float = 0.15
    column_radius_m: tuple[float, float] = (0.15, 0.3)
    min_start_goal_m: float = 5.0
    border_margin_m: float = 0.3
    clearance_m: float = 0.6
    invisible_fraction: float = 0.0
    max_retries: int = 1000


def generate_world(seed: int, gen: GenConfig | None = None) -> WorldModel:
    gen = gen or GenConfig()
    if gen.n_walls < 1:
        warnings.warn("at least one wall is required; using 1", stacklevel=2)
        gen = replace(gen, n_walls=1)
    if gen.n_columns < 2:
        warnings.warn("at least two columns are required; using 2", stacklevel=2)
        gen = replace(gen, n_columns=2)
    rng = np.random.default_rng(seed)
    size, m = gen.extent_m, gen.border_margin_m
    n = int(round(size / gen.section_m))

    # far-apart pairs are rare (near opposite corners), so draw candidates in batches
    for _ in range(gen.max_retries):
        pairs = rng.uniform(m, size - m, (_PAIR_BATCH, 4))
        ok = np.flatnonzero(np.hypot(pairs[:, 2] - pairs[:, 0], pairs[:, 3] - pairs[:, 1])
                            >= gen.min_start_goal_m)
        if len(ok):
            start, goal = pairs[ok[0], :2], pairs[ok[0], 2:]
            break
    else:
        raise GenerationFailed(seed, "no start/goal pair at the minimum distance")

    levels = np.array(SIM_LEVELS)
    level_idx = rng.integers(0, len(levels), size=(n, n))
    for p in (start, goal):
        col = min(int(p[0] // gen.section_m), n - 1)
        row = min(int(p[1] // gen.section_m), n - 1)
        level_idx[row, col] = 0

    def clear_of_endpoints(ob) -> bool:
        return all(ob.signed_distance(*p) >= gen.clearance_m for p in (start, goal))

    obstacles = []
    wanted = ["wall"] * gen.n_walls + ["column"] * gen.n_columns
    for kind in wanted:
        for _ in range(gen.max_retries):
            center = tuple(float(v) for v in rng.uniform(0.5, size - 0.5, 2))
            visible = bool(rng.random() >= gen.invisible_fraction)
            if kind == "wall":
                ob = Wall(center, float(rng.uniform(*gen.wall_length_m)) / 2,
                          gen.wall_thickness_m / 2, float(rng.uniform(0, math.pi)), visible)
            else:
                ob = Column(center, float(rng.uniform(*gen.column_radius_m)), visible)
            if clear_of_endpoints(ob):
                obstacles.append(ob)
                break
        else:
            raise GenerationFailed(seed, f"could not place a {kind} clear of start and goal")

    yaw = math.atan2(goal[1] - start[1], goal[0] - start[0])
    return WorldModel(
        difficulty=levels[level_idx].astype(float),
        terrain_class=level_idx.astype(int),
        obstacles=obstacles,
        start=Pose(float(start[0]), float(start[1]), float(yaw)),
        goal=(float(goal[0]), float(goal[1])),
        seed=int(seed),
        extent_m=size,
        section_m=gen.section_m,
    )


@dataclass(frozen=True)
class RobotState:
    x: float
    y: float
    yaw: float
    v_actual: float = 0.0
    collided: bool = False
    time_s: float = 0.0
    # snagged on rough ground: forward motion blocked until a reverse or a turn
    stuck: bool = False
    stuck_heading: float = 0.0

    @property
    def pose(self) -> Pose:
        return Pose(self.x, self.y, self.yaw)

    @classmethod
    def at(cls, pose: Pose) -> "RobotState":
        return cls(pose.x, pose.y, pose.yaw)


@dataclass
class MotionModelConfig:
    eval_levels: tuple[float, ...] = SIM_LEVELS
    eval_curve: tuple[float, ...] = (0.86, 0.7508, 0.3179, 0.1522, 0.0586)
    eval_noise_sigma: float = 0.03
    collision_eval: float = 0.02
    slowdown_gain: float = 0.6
    max_yaw_rate: float = 1.5
    dt_s: float = 0.02
    robot_radius_m: float = 0.0
    # snag events per second of forward walking, interpolated over eval_levels
    stuck_hazard: tuple[float, ...] = (0.0, 0.0, 0.0125, 0.0375, 0.075)
    stuck_release_rad: float = 0.3


def _first_free(world: WorldModel, x0, y0, x1, y1, margin: float) -> tuple[float, float]:
    lo, hi = 0.0, 1.0
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if world.clearance(x0 + mid * (x1 - x0), y0 + mid * (y1 - y0)) < margin:
            hi = mid
        else:
            lo = mid
    return x0 + lo * (x1 - x0), y0 + lo * (y1 - y0)


def step(world: WorldModel, state: RobotState, cmd: VelocityCommand,
         cfg: MotionModelConfig, rng: np.random.Generator | None = None) -> RobotState:
    """Advance one motion step of dt_s.

    Snag events are drawn only when ``rng`` is given; without it the step is
    pure unicycle kinematics with terrain slowdown.
    """
    dt = cfg.dt_s
    if dt <= 0:
        raise ValueError("dt_s must be positive")
    max_turn = cfg.max_yaw_rate * dt
    yaw = wrap_angle(state.yaw + min(max(cmd.delta_yaw, -max_turn), max_turn))
    t = state.time_s + dt
    d = world.difficulty_at(state.x, state.y)

    stuck, stuck_heading = state.stuck, state.stuck_heading
    if stuck and (cmd.v_lin < 0 or abs(wrap_angle(yaw - stuck_heading)) >= cfg.stuck_release_rad):
        stuck = False
    if not stuck and rng is not None and cmd.v_lin > 0:
        hazard = float(np.interp(d, cfg.eval_levels, cfg.stuck_hazard))
        if hazard > 0 and rng.random() < hazard * dt:
            stuck, stuck_heading = True, yaw
    if stuck:
        return RobotState(state.x, state.y, yaw, 0.0, False, t, True, stuck_heading)

    v = cmd.v_lin * max(0.0, 1.0 - cfg.slowdown_gain * d)
    nx = state.x + v * dt * math.cos(yaw)
    ny = state.y + v * dt * math.sin(yaw)
    if v != 0 and world.clearance(nx, ny) < cfg.robot_radius_m:
        bx, by = _first_free(world, state.x, state.y, nx, ny, cfg.robot_radius_m)
        return RobotState(bx, by, yaw, 0.0, True, t)
    return RobotState(nx, ny, yaw, v, False, t)


@dataclass
class SensorConfig:
    fov_rad: float = math.pi / 2
    terrain_fov_rad: float = math.pi / 2
    range_m: float = 3.0
    sample_step_m: float = 0.05
    feature_noise_sigma: float = 0.05
    feature_dim: int = 16
    feature_seed: int = 7


def sense_obstacles(world: WorldModel, state: RobotState, cfg: SensorConfig) -> np.ndarray:
    """Boundary samples of visible obstacles inside the field of view, occlusion tested."""
    visible = [o for o in world.obstacles if o.visible]
    if not visible:
        return np.zeros((0, 2))
    origin = np.array([state.x, state.y])
    pts = np.concatenate([o.boundary_points(cfg.sample_step_m) for o in visible])
    rel = to_robot_frame(pts, state.pose)
    dist = np.hypot(rel[:, 0], rel[:, 1])
    bearing = np.arctan2(rel[:, 1], rel[:, 0])
    keep = (dist <= cfg.range_m) & (np.abs(bearing) <= cfg.fov_rad / 2) & (dist > 0)
    pts, dist = pts[keep], dist[keep]
    if len(pts) == 0:
        return np.zeros((0, 2))
    occluded = np.zeros(len(pts), dtype=bool)
    for o in visible:
        t = o.entry_parameter(origin, pts)
        occluded |= t * dist < dist - 1e-6
    return pts[~occluded]


def feature_bank(cfg: SensorConfig, names=WORLD_CLASS_NAMES) -> FeatureBank:
    return FeatureBank.build(names, cfg.feature_dim, cfg.feature_seed)


def in_terrain_coverage(rel: np.ndarray, cfg: SensorConfig) -> np.ndarray:
    bearing = np.arctan2(rel[..., 1], rel[..., 0])
    return (np.hypot(rel[..., 0], rel[..., 1]) > 0) & (np.abs(bearing) < cfg.terrain_fov_rad / 2)


def sense_terrain_features(world: WorldModel, patch_center, bank: FeatureBank,
                           rng: np.random.Generator, state: RobotState,
                           spec: GridSpec, cfg: SensorConfig) -> np.ndarray | None:
    """Noisy unit feature of the terrain at a patch center, or None outside coverage."""
    center = np.asarray(patch_center, dtype=float)
    rel = to_robot_frame(center, state.pose)
    mask, feats = sense_patches(world, center[None, :], rel[None, :], bank, rng, spec, cfg)
    return feats[0] if mask[0] else None


def sense_patches(world: WorldModel, world_centers: np.ndarray, rel_centers: np.ndarray,
                  bank: FeatureBank, rng: np.random.Generator, spec: GridSpec,
                  cfg: SensorConfig) -> tuple[np.ndarray, np.ndarray]:
    res = spec.resolution_m
    lo_f = -spec.base_cell[0] * res - res / 2
    hi_f = (spec.width_cells - spec.base_cell[0]) * res - res / 2
    lo_l = -spec.base_cell[1] * res - res / 2
    hi_l = (spec.height_cells - spec.base_cell[1]) * res - res / 2
    in_window = ((rel_centers[:, 0] >= lo_f) & (rel_centers[:, 0] < hi_f)
                 & (rel_centers[:, 1] >= lo_l) & (rel_centers[:, 1] < hi_l))
    mask = in_window & in_terrain_coverage(rel_centers, cfg)
    cls = world.class_indices(world_centers[mask])
    names = [world.class_names[c] for c in cls]
    protos = bank.prototypes[[bank.names.index(n) for n in names]].reshape(len(names), bank.dim)
    if cfg.feature_noise_sigma > 0 and len(protos):
        protos = protos + rng.normal(0.0, cfg.feature_noise_sigma, size=protos.shape)
    if len(protos):
        protos = protos / np.linalg.norm(protos, axis=1, keepdims=True)
    return mask, protos


def motion_evaluation(world: WorldModel, state: RobotState, cfg: MotionModelConfig,
                      rng: np.random.Generator) -> MotionEvaluation:
    if state.collided or state.stuck:
        return MotionEvaluation.from_norm(cfg.collision_eval, state.time_s)
    d = world.difficulty_at(state.x, state.y)
    c = float(np.interp(d, cfg.eval_levels, cfg.eval_curve))
    if cfg.eval_noise_sigma > 0:
        c += float(rng.normal(0.0, cfg.eval_noise_sigma))
    return MotionEvaluation.from_norm(min(max(c, 0.0), 1.0), state.time_s)
