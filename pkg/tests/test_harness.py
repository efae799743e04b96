import csv
import io
import json
import math
import pickle
from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pytest

from topnav.gridmap import Pose
from topnav.harness import cli
from topnav.harness.batch import BatchSummary, run_batch, summarize
from topnav.harness.config import Config, ConfigError, dump_config, load_config
from topnav.harness.episode import (
    SUCCESS_RADIUS_M, VARIANTS, EpisodeAborted, VariantFlags, run_episode, variant,
)
from topnav.harness.export import (
    ExportError, csv_header, grid_text, jsonl_text, summary_csv_text, write_grid,
)
from topnav.harness.metrics import compute_metrics
from topnav.harness.scenes import SCENES, encounter_difficulties, scripted_scene
from topnav.sim import WorldModel, generate_world, sense_obstacles, RobotState, SensorConfig
from topnav.terrain import SIM_CLASS_NAMES, classify_patches


def empty_world(goal=(5.5, 1.0)):
    n = 7
    return WorldModel(np.zeros((n, n)), np.zeros((n, n), dtype=int), [], Pose(0.5, 1.0, 0.0),
                      goal, seed=3, extent_m=7.0)


def rec(x, y, d=0.0, v_cmd=0.5, v_act=0.5, c=0.9, collided=False):
    return SimpleNamespace(x=x, y=y, difficulty=d, v_cmd=v_cmd, v_actual=v_act, c_norm=c,
                           collided=collided)


# ---- config

def test_config_round_trip():
    cfg = Config()
    cfg.planner.k_T1 = 0.3
    cfg.motion.stuck_hazard = (0.0, 0.1, 0.2, 0.3, 0.4)
    again = load_config(text=dump_config(cfg))
    assert dump_config(again) == dump_config(cfg)


@pytest.mark.parametrize("text", [
    "[planner]\nbogus = 1\n", "[nowhere]\nx = 1\n", "[planner]\nk_T1 = abc\n",
    "[grid]\nprofile = huge\n", "[planner]\ntie_preference = sideways\n",
])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        load_config(text=text)


def test_benchmark_profile_loads(bench_cfg):
    assert bench_cfg.planner.k_T1 == 0.3
    assert bench_cfg.planner.tie_preference == "commit"


# ---- metrics

def test_metrics_examples():
    flat = [rec(0.01 * i, 0) for i in range(100)]
    m = compute_metrics(flat)
    assert m["td_percent"] == 0 and m["ut_proxy_percent"] == 0 and m["collisions"] == 0
    half = [rec(0.15 * i + 0.01, 0, d=0.0 if i < 10 else 0.5) for i in range(20)]
    assert compute_metrics(half)["td_percent"] == pytest.approx(25.0)
    gap = [rec(0.01 * i, 0, v_cmd=0.5, v_act=0.2) for i in range(10)]
    assert compute_metrics(gap)["vft_percent"] == 100.0
    bumps = [rec(0, 0, collided=b) for b in (True, True, False, True)]
    assert compute_metrics(bumps)["collisions"] == 2
    with pytest.raises(ValueError):
        compute_metrics([])


# ---- episodes

def test_empty_world_reaches_goal_in_kinematic_time():
    r = run_episode(empty_world(), VARIANTS["TOP"], Config(), seed=0)
    assert r.success
    # 4.5 m to the success circle at 0.5 m/s
    assert 9.0 <= r.time_s <= 9.6
    assert r.collisions == 0 and r.td_percent == 0


def test_success_recomputable_from_trajectory():
    world = generate_world(4)
    for name in ("TOP", "Obstacle-Only"):
        r = run_episode(world, VARIANTS[name], Config(), seed=1)
        hit = any(math.hypot(x - world.goal[0], y - world.goal[1]) <= SUCCESS_RADIUS_M and t <= 20.0
                  for t, x, y, _ in r.trajectory)
        assert r.success == hit
        assert r.time_s <= 20.0
        assert r.time_fraction == pytest.approx(r.time_s / 20.0)


def test_disabled_layer_equals_zero_layer():
    world = generate_world(8)
    no_visible = replace(world, obstacles=[replace(o, visible=False) for o in world.obstacles])
    on = run_episode(no_visible, VariantFlags(True, True, True, True), Config(), 0)
    off = run_episode(no_visible, VariantFlags(True, True, False, True), Config(), 0)
    assert jsonl_text(on.log) == jsonl_text(off.log)

    zero_prior = Config()
    zero_prior.terrain.prior_costs = {k: 0.0 for k in zero_prior.terrain.prior_costs}
    t_on = run_episode(world, VariantFlags(True, True, True, False), zero_prior, 0)
    t_off = run_episode(world, VariantFlags(False, True, True, False), zero_prior, 0)
    assert jsonl_text(t_on.log) == jsonl_text(t_off.log)


def test_non_finite_cost_aborts_with_dump():
    cfg = Config()
    cfg.planner.k_T1 = math.nan
    with pytest.raises(EpisodeAborted) as info:
        run_episode(generate_world(2), VARIANTS["TOP"], cfg, 0)
    err = info.value
    assert err.seed == 2 and "pose" in err.dump
    again = pickle.loads(pickle.dumps(err))
    assert again.seed == 2 and str(again) == str(err)


def test_variant_lookup():
    assert variant("TOP") == VariantFlags()
    assert variant("wo/Proprioception").use_online_correction is False
    with pytest.raises(KeyError):
        variant("nope")


# ---- batches

def test_batch_summary_independent_of_workers():
    a = run_batch(2, 1, ["TOP", "Obstacle-Only"], base_seed=5, parallelism=1)
    b = run_batch(2, 1, ["TOP", "Obstacle-Only"], base_seed=5, parallelism=2)
    assert summary_csv_text(a) == summary_csv_text(b)
    assert a.variants == b.variants and a.episode_count == 4


def test_batch_fold_ignores_order():
    a = run_batch(2, 2, ["Obstacle-Only"], base_seed=1)
    b = summarize(list(reversed(a.results)), ["Obstacle-Only"])
    assert a.variants == b.variants


def test_batch_stats_formula():
    s = run_batch(1, 3, ["Obstacle-Only"], base_seed=9)
    st_ = s.variants["Obstacle-Only"]
    td = np.array([r.td_percent for r in s.results])
    assert st_.mean["td"] == pytest.approx(td.mean())
    assert st_.stderr["td"] == pytest.approx(td.std(ddof=1) / math.sqrt(3))


@pytest.mark.parametrize("args", [
    dict(variants=[]), dict(variants=["nope"]), dict(n_worlds=0),
])
def test_batch_config_errors(args):
    kw = dict(n_worlds=1, episodes_per_world=1, variants=["TOP"])
    kw.update(args)
    with pytest.raises(ConfigError):
        run_batch(**kw)


def test_batch_abort_names_world():
    cfg = Config()
    cfg.planner.k_T1 = math.nan
    with pytest.raises(EpisodeAborted) as info:
        run_batch(2, 1, ["TOP"], base_seed=40, cfg=cfg)
    assert info.value.seed == 40


def test_empty_summary_rejected():
    with pytest.raises(ValueError):
        BatchSummary({}, 0)


# ---- scenes

def test_scene_determinism_and_names():
    for name in SCENES:
        assert scripted_scene(name, 3).to_text() == scripted_scene(name, 3).to_text()
    assert scripted_scene("glass-wall", 1).to_text() != scripted_scene("glass-wall", 2).to_text()
    with pytest.raises(ConfigError):
        scripted_scene("moon", 0)


def test_glass_wall_is_invisible_and_on_the_path():
    for seed in range(5):
        w = scripted_scene("glass-wall", seed)
        wall = w.obstacles[0]
        assert not wall.visible
        mid = np.array(wall.center)
        assert wall.signed_distance(*mid) < 0
        pts = sense_obstacles(w, RobotState.at(w.start), SensorConfig())
        assert all(wall.signed_distance(x, y) > 1e-6 for x, y in pts)
        # the straight start-goal segment enters the wall
        t = wall.entry_parameter(np.array([w.start.x, w.start.y]), np.array([w.goal]))
        assert 0 < t[0] < 1


def test_novel_strip_has_low_confidence(bench_cfg):
    from topnav.harness.episode import make_classifier
    from topnav.sim import feature_bank
    w = scripted_scene("novel-terrain", 0)
    novel = w.class_names.index("novel")
    bank = feature_bank(bench_cfg.sensor, w.class_names)
    rng = np.random.default_rng(0)
    feats = bank.prototypes[novel] + rng.normal(0, bench_cfg.sensor.feature_noise_sigma, (200, 16))
    out = classify_patches(feats, make_classifier(bench_cfg), rng)
    assert np.all(out["confidence"] <= 0.6)
    assert np.any(w.terrain_class == novel)


def test_slippery_strip_spans_corridor():
    w = scripted_scene("slippery-strip", 0)
    n = w.difficulty.shape[0]
    # every monotone walk from the start corner to the goal corner crosses the band
    assert all(w.difficulty[r, c] > 0 for r in range(n) for c in range(n) if r + c == 2)


def test_encounter_metric():
    w = scripted_scene("novel-terrain", 0)
    z0 = w.annotations["encounter_zones"][0]
    log = [rec(z0[0] + 0.6, z0[1] + 0.6, d=1.0), rec(z0[0] + 0.1, z0[1] + 0.1, d=0.0)]
    first, second = encounter_difficulties(w, log)
    assert first == pytest.approx(0.5) and math.isnan(second)


# ---- export

def test_csv_shape_and_determinism():
    s = run_batch(1, 1, ["TOP", "Obstacle-Only"], base_seed=2)
    text = summary_csv_text(s)
    rows = list(csv.reader(io.StringIO(text)))
    assert len(rows) == 3 and rows[0] == csv_header()
    assert [r[0] for r in rows[1:]] == ["TOP", "Obstacle-Only"]
    assert summary_csv_text(run_batch(1, 1, ["TOP", "Obstacle-Only"], base_seed=2)) == text


def test_grid_dump_dimensions(tmp_path):
    values = np.random.default_rng(0).random((10, 8))
    path = write_grid(values, tmp_path / "m_c.txt")
    lines = path.read_text().splitlines()
    assert len(lines) == 10 and all(len(line.split()) == 8 for line in lines)
    assert np.allclose(np.loadtxt(path), values, atol=1e-6)
    with pytest.raises(ValueError):
        grid_text(np.zeros(3))


def test_jsonl_one_record_per_step():
    r = run_episode(empty_world(), VARIANTS["TOP"], Config(), 0, snapshot_layers=True)
    lines = jsonl_text(r.log).splitlines()
    assert len(lines) == len(r.log)
    first = json.loads(lines[0])
    assert {"t", "x", "y", "yaw", "c_norm", "v_cmd", "dyaw_cmd", "layers"} <= set(first)
    assert len(first["layers"]["M_C"]) == 10


def test_write_error_has_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(ExportError, match=str(blocker)):
        write_grid(np.zeros((2, 2)), blocker / "sub" / "g.txt")


# ---- CLI

def test_cli_round_trip(tmp_path, capsys):
    world = tmp_path / "w.json"
    assert cli.main(["gen", "--seed", "3", "--out", str(world)]) == 0
    log = tmp_path / "run.jsonl"
    layers = tmp_path / "layers"
    assert cli.main(["run", "--world", str(world), "--variant", "Obstacle-Only", "--log", str(log),
                     "--dump-layers", str(layers)]) == 0
    assert len(log.read_text().splitlines()) > 0
    assert any(p.name.startswith("M_C_") for p in layers.iterdir())
    scene = tmp_path / "s.json"
    assert cli.main(["scene", "--name", "glass-wall", "--seed", "1", "--out", str(scene)]) == 0
    assert WorldModel.from_text(scene.read_text()).annotations["scene"] == "glass-wall"
    out = tmp_path / "b.csv"
    assert cli.main(["batch", "--worlds", "1", "--episodes", "1", "--variants", "TOP,Obstacle-Only",
                     "--seed", "0", "--csv", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 3


def test_cli_exit_codes(tmp_path):
    world = tmp_path / "w.json"
    cli.main(["gen", "--seed", "3", "--out", str(world)])
    assert cli.main(["run", "--world", str(world), "--variant", "bad", "--log", str(tmp_path / "l")]) == 2
    assert cli.main(["scene", "--name", "moon", "--seed", "1", "--out", str(tmp_path / "s")]) == 2
    assert cli.main(["batch", "--worlds", "1", "--episodes", "1", "--variants", "",
                     "--seed", "0", "--csv", str(tmp_path / "b.csv")]) == 2
    assert cli.main(["run", "--world", str(tmp_path / "missing.json"), "--variant", "TOP",
                     "--log", str(tmp_path / "l")]) == 2
    with pytest.raises(SystemExit) as info:
        cli.main(["gen", "--seed", "x", "--out", "y"])
    assert info.value.code == 2
    bad = tmp_path / "nan.cfg"
    bad.write_text("[planner]\nk_T1 = nan\n")
    assert cli.main(["--config", str(bad), "run", "--world", str(world), "--variant", "TOP",
                     "--log", str(tmp_path / "l")]) == 3
