"""Closed-loop episode: sense, build layers, plan, step, evaluate, record."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ..gridmap import CostGrid, NonFiniteCost, cell_to_world, to_robot_frame, wrap_angle
from ..planner import (
    Goal, VelocityCommand, alpha_goal, alpha_terrain, combine, command_for_heading,
    goal_cost_map, obstacle_cost_map, select_waypoint,
)
from ..proprio import (
    MotionEvaluation, Phase, RecoveryState, advised, proprio_cost_map,
    anchored_proprio_map, record_traversability, recovery_step,
)
from ..sim import (
    RobotState, WorldModel, feature_bank, motion_evaluation, sense_obstacles,
    sense_patches, step,
)
from ..terrain import SIM_CLASS_NAMES, TerrainClassModel, TerrainEstimator
from .config import Config
from .metrics import compute_metrics

SUCCESS_RADIUS_M = 0.5
# 50 Hz motion against 3 Hz planning: replan every 17th motion step
PLAN_EVERY_STEPS = 17
# a pinned robot that turns this far records a new failure anchor
ANCHOR_YAW_STEP = 0.2


class EpisodeAborted(RuntimeError):
    def __init__(self, seed: int, message: str, dump: dict | None = None):
        super().__init__(f"episode aborted (world seed {seed}): {message}")
        self.seed = seed
        self.dump = dump or {}
        self.message = message

    def __reduce__(self):
        return EpisodeAborted, (self.seed, self.message, self.dump)


@dataclass(frozen=True)
class VariantFlags:
    use_terrain: bool = True
    use_proprio: bool = True
    use_obstacles: bool = True
    use_online_correction: bool = True


VARIANTS = {
    "TOP": VariantFlags(True, True, True, True),
    "wo/Terrain": VariantFlags(False, True, True, False),
    "wo/Proprioception": VariantFlags(True, False, True, False),
    "Obstacle-Only": VariantFlags(False, False, True, False),
    "TOP-noCorrection": VariantFlags(True, True, True, False),
}
ABLATION_VARIANTS = ("TOP", "wo/Terrain", "wo/Proprioception", "Obstacle-Only")


def variant(name: str) -> VariantFlags:
    try:
        return VARIANTS[name]
    except KeyError:
        raise KeyError(f"unknown variant {name!r}; choose from {sorted(VARIANTS)}") from None


@dataclass
class StepRecord:
    time_s: float
    x: float
    y: float
    yaw: float
    v_cmd: float
    dyaw_cmd: float
    v_actual: float
    c_norm: float
    collided: bool
    phase: str
    difficulty: float
    planned: bool = False
    layers: dict | None = None

    def to_json(self) -> dict:
        d = {
            "t": round(self.time_s, 6), "x": self.x, "y": self.y, "yaw": self.yaw,
            "v_cmd": self.v_cmd, "dyaw_cmd": self.dyaw_cmd, "v_act": self.v_actual,
            "c_norm": self.c_norm, "collided": self.collided, "phase": self.phase,
            "difficulty": self.difficulty, "planned": self.planned,
        }
        if self.layers is not None:
            d["layers"] = self.layers
        return d


@dataclass
class EpisodeResult:
    success: bool
    time_s: float
    td_percent: float
    vft_percent: float
    ut_proxy_percent: float
    collisions: int
    trajectory: list[tuple[float, float, float, float]]
    seed: int
    variant: str
    world_seed: int
    final_goal_distance: float
    log: list[StepRecord] = field(default_factory=list, repr=False)

    @property
    def time_fraction(self) -> float:
        return self.time_s / 20.0


def make_classifier(cfg: Config) -> TerrainClassModel:
    bank = feature_bank(cfg.sensor)
    return TerrainClassModel.from_bank(
        bank, SIM_CLASS_NAMES, noise_sigma=cfg.classifier.noise_sigma,
        softmax_temperature=cfg.classifier.softmax_temperature, K=cfg.classifier.K)


def _zero_layer(spec) -> CostGrid:
    return CostGrid.zeros(spec)


def run_episode(world: WorldModel, flags: VariantFlags, cfg: Config, seed: int,
                variant_name: str = "custom", keep_log: bool = True,
                snapshot_layers: bool = False) -> EpisodeResult:
    spec = cfg.spec
    pc, prc, mc = cfg.planner, cfg.proprio, cfg.motion
    dt = mc.dt_s
    n_steps = int(round(pc.time_budget_s / dt))
    slow_every = int(round(1.0 / (prc.slow_replan_hz * dt)))
    record_every = int(round(prc.window_s / dt))

    ss = np.random.SeedSequence([int(seed), int(world.seed)])
    eval_rng, cls_rng, sense_rng, motion_rng = (np.random.default_rng(s) for s in ss.spawn(4))

    bank = feature_bank(cfg.sensor, world.class_names)
    estimator = TerrainEstimator(make_classifier(cfg), cfg.terrain,
                                 use_correction=flags.use_online_correction and flags.use_proprio)
    goal = Goal.point(*world.goal)

    def patch_sensor(world_centers, rel_centers):
        return sense_patches(world, world_centers, rel_centers, bank, sense_rng, spec, cfg.sensor)

    state = RobotState.at(world.start)
    rec = RecoveryState()
    history: deque[MotionEvaluation] = deque(maxlen=4 * record_every)
    last_eval = motion_evaluation(world, state, mc, eval_rng)
    history.append(last_eval)

    zero = _zero_layer(spec)
    waypoint_world = None
    since_plan = None
    log: list[StepRecord] = []
    success = False
    final_t = pc.time_budget_s

    # recent blocked steps (time, advised reading, pose), thinned to distinct poses
    failures: deque = deque()

    def remember_failure(c: float, pose) -> None:
        if c >= prc.recovery_threshold:
            return
        if failures:
            _, _, last = failures[-1]
            if (math.hypot(pose.x - last.x, pose.y - last.y) < spec.resolution_m / 2
                    and abs(wrap_angle(pose.yaw - last.yaw)) < ANCHOR_YAW_STEP):
                return
        failures.append((state.time_s, c, pose))

    # (time, x, y, commanded forward) over the last stall_s
    track: deque = deque()

    def blocked() -> bool:
        if not track or track[-1][0] - track[0][0] < prc.stall_s - 1e-9:
            return False
        if not all(fwd for *_, fwd in track):
            return False
        return math.hypot(track[-1][1] - track[0][1], track[-1][2] - track[0][2]) \
            < prc.stall_distance_m

    def proprio_layer(pose):
        # the current reading, plus every recent failure anchored where it happened,
        # so a blocked direction stays costly while the robot backs off and turns away
        m_p = proprio_cost_map(advised(last_eval.c_norm, prc), spec, prc.k_P).values
        while failures and failures[0][0] < state.time_s - prc.memory_s - 1e-9:
            failures.popleft()
        for _, c, anchor in failures:
            m_p = np.maximum(m_p, anchored_proprio_map(c, anchor, pose, spec, prc.k_P).values)
        return CostGrid(spec, m_p)

    def plan(now: float):
        nonlocal waypoint_world
        pose = state.pose
        try:
            m_p = proprio_layer(pose) if flags.use_proprio else zero
            m_o = obstacle_cost_map(sense_obstacles(world, state, cfg.sensor), pose, spec,
                                    pc.d_max) if flags.use_obstacles else zero
            m_t = estimator.cost_map(pose, spec, patch_sensor, cls_rng) if flags.use_terrain else zero
            m_g = goal_cost_map(goal, pose, spec)
            d_goal = math.hypot(world.goal[0] - state.x, world.goal[1] - state.y)
            a_t = alpha_terrain(d_goal, pc)
            a_g = alpha_goal(now / pc.time_budget_s, pc)
            if not (math.isfinite(a_t) and math.isfinite(a_g)):
                raise NonFiniteCost(f"layer weights alpha_T={a_t}, alpha_G={a_g}")
            m_c = combine(m_p, m_o, m_t, m_g, a_t, a_g)
        except NonFiniteCost as exc:
            raise EpisodeAborted(world.seed, f"non-finite cost: {exc}",
                                 {"time_s": now, "pose": list(pose)}) from exc
        # the tie band scales with the goal weight, which sets the spread of path costs
        prefer = None
        if pc.heading_tie_tolerance > 0:
            mode = pc.tie_preference
            if mode == "commit":
                # hold the chosen side only while working around a remembered blockage
                mode = "previous" if failures else "heading"
            target = {"goal": world.goal, "previous": waypoint_world}.get(mode)
            if target is not None:
                t_fwd, t_lat = to_robot_frame(target, pose)
                prefer = math.atan2(t_lat, t_fwd)
        wp = select_waypoint(m_c, spec, pc.path_cost_mode, pc.heading_tie_tolerance * a_g, prefer)
        waypoint_world = cell_to_world(wp, pose, spec)
        if snapshot_layers:
            return {"M_P": m_p.values.tolist(), "M_O": m_o.values.tolist(),
                    "M_T": m_t.values.tolist(), "M_G": m_g.values.tolist(),
                    "M_C": m_c.values.tolist(), "waypoint": list(wp),
                    "alpha_T": a_t, "alpha_G": a_g}
        return None

    for k in range(n_steps):
        now = k * dt
        override = None
        period = PLAN_EVERY_STEPS
        forced = False
        if flags.use_proprio:
            reached = waypoint_world is not None and math.hypot(
                waypoint_world[0] - state.x, waypoint_world[1] - state.y) <= spec.resolution_m
            prev = rec.phase
            rec, override, period_override = recovery_step(
                rec, last_eval.c_norm, now, state.yaw, reached, prc, blocked())
            if period_override is not None:
                period = slow_every
            # re-plan the moment a back-off starts so the new waypoint sees the low reading
            forced = prev is Phase.NORMAL and rec.phase is Phase.BACKOFF
        layers = None
        planned = False
        if override is None or forced:
            if since_plan is None or since_plan >= period or forced:
                layers = plan(now)
                since_plan = 0
                planned = True
        if override is not None:
            cmd = override
        else:
            # track the stored waypoint at 50 Hz; speed follows the remaining heading error
            fwd, lat = to_robot_frame(waypoint_world, state.pose)
            cmd = command_for_heading(math.atan2(lat, fwd), pc)
        since_plan += 1

        state = step(world, state, cmd, mc, motion_rng)
        last_eval = motion_evaluation(world, state, mc, eval_rng)
        history.append(last_eval)
        # only a step that went nowhere under a forward command marks a blocked direction
        if flags.use_proprio and cmd.v_lin > 0 and state.v_actual == 0.0:
            remember_failure(advised(last_eval.c_norm, prc), state.pose)
        track.append((state.time_s, state.x, state.y, cmd.v_lin > 0))
        while track[-1][0] - track[0][0] > prc.stall_s + 1e-9:
            track.popleft()

        if estimator.use_correction and (k + 1) % record_every == 0:
            t_p = record_traversability(history, state.time_s, prc)
            if t_p is not None:
                estimator.record((state.x, state.y), t_p)

        log.append(StepRecord(
            state.time_s, state.x, state.y, state.yaw, cmd.v_lin, cmd.delta_yaw,
            state.v_actual, last_eval.c_norm, state.collided, rec.phase.value,
            world.difficulty_at(state.x, state.y), planned, layers))

        if math.hypot(world.goal[0] - state.x, world.goal[1] - state.y) <= SUCCESS_RADIUS_M:
            success = True
            final_t = state.time_s
            break

    metrics = compute_metrics(log)
    dist = math.hypot(world.goal[0] - state.x, world.goal[1] - state.y)
    return EpisodeResult(
        success=success,
        time_s=final_t,
        td_percent=metrics["td_percent"],
        vft_percent=metrics["vft_percent"],
        ut_proxy_percent=metrics["ut_proxy_percent"],
        collisions=metrics["collisions"],
        trajectory=[(r.time_s, r.x, r.y, r.yaw) for r in log],
        seed=int(seed),
        variant=variant_name,
        world_seed=int(world.seed),
        final_goal_distance=dist,
        log=log if keep_log else [],
    )
