"""Hand-built worlds for the invisible-obstacle and unfamiliar-terrain checks.

Every scene runs corner to corner along the diagonal of the 5 m cell, so
start and goal are about 5.8 m apart. The seed only jitters geometry.
"""

from __future__ import annotations

import math

import numpy as np

from ..gridmap import Pose
from ..sim import NOVEL_CLASS, WORLD_CLASS_NAMES, Column, Wall, WorldModel
from .config import ConfigError

SCENES = ("glass-wall", "novel-terrain", "slippery-strip")
EXTENT_M = 5.0
SECTION_M = 1.0
# the novel-terrain scene uses finer sections so its strips can run diagonally
NOVEL_SECTION_M = 0.5
NOVEL_DIFFICULTY = 1.0
STRIP_DIFFICULTY = 0.75
# encounter zones reach this far past the strip sections
ZONE_MARGIN_M = 0.5


def _base(rng: np.random.Generator, seed: int, section_m: float = SECTION_M) -> dict:
    n = int(round(EXTENT_M / section_m))
    j = rng.uniform(-0.05, 0.05, 4)
    start = (0.45 + j[0], 0.45 + j[1])
    goal = (4.55 + j[2], 4.55 + j[3])
    yaw = math.atan2(goal[1] - start[1], goal[0] - start[0])
    # visible columns well off the diagonal keep the obstacle layer non-trivial
    columns = [Column((1.0 + rng.uniform(-0.1, 0.1), 4.0), 0.2),
               Column((4.0 + rng.uniform(-0.1, 0.1), 1.0), 0.2)]
    return dict(difficulty=np.zeros((n, n)), terrain_class=np.zeros((n, n), dtype=int),
                obstacles=columns, start=Pose(start[0], start[1], yaw), goal=goal,
                seed=int(seed), extent_m=EXTENT_M, section_m=section_m,
                class_names=WORLD_CLASS_NAMES)


def _glass_wall(rng, seed) -> WorldModel:
    kw = _base(rng, seed)
    (sx, sy), (gx, gy) = (kw["start"].x, kw["start"].y), kw["goal"]
    frac = 0.4 + rng.uniform(-0.05, 0.05)
    center = (sx + frac * (gx - sx), sy + frac * (gy - sy))
    heading = math.atan2(gy - sy, gx - sx)
    wall = Wall(center, 0.5 + rng.uniform(-0.05, 0.05), 0.05, heading + math.pi / 2, visible=False)
    kw["obstacles"] = [wall] + kw["obstacles"]
    return WorldModel(**kw, annotations={"scene": "glass-wall"})


def _zone(sections, section_m: float) -> list[float]:
    rows = [r for r, _ in sections]
    cols = [c for _, c in sections]
    return [min(cols) * section_m - ZONE_MARGIN_M, min(rows) * section_m - ZONE_MARGIN_M,
            (max(cols) + 1) * section_m + ZONE_MARGIN_M, (max(rows) + 1) * section_m + ZONE_MARGIN_M]


def _paint(kw, sections, difficulty):
    novel = WORLD_CLASS_NAMES.index(NOVEL_CLASS)
    for r, c in sections:
        kw["difficulty"][r, c] = difficulty
        kw["terrain_class"][r, c] = novel


def _novel_terrain(rng, seed) -> WorldModel:
    # two identical unfamiliar strips laid across the diagonal, one near each end;
    # each is two sections deep and 3 sections either side of the diagonal, so the
    # second one can be skirted by a robot that has learned what it is
    kw = _base(rng, seed, NOVEL_SECTION_M)
    n = kw["difficulty"].shape[0]
    encounters = [[(r, c) for r in range(n) for c in range(n)
                   if r + c in bands and abs(r - c) <= 3] for bands in ((4, 5), (12, 13))]
    for secs in encounters:
        _paint(kw, secs, NOVEL_DIFFICULTY)
    return WorldModel(**kw, annotations={
        "scene": "novel-terrain",
        "encounter_zones": [_zone(s, NOVEL_SECTION_M) for s in encounters],
    })


def _slippery_strip(rng, seed) -> WorldModel:
    # a two-section-thick band across the whole cell: there is no way around it
    kw = _base(rng, seed)
    n = kw["difficulty"].shape[0]
    band = [(r, c) for r in range(n) for c in range(n) if r + c in (2, 3)]
    _paint(kw, band, STRIP_DIFFICULTY)
    return WorldModel(**kw, annotations={"scene": "slippery-strip"})


def scripted_scene(name: str, seed: int = 0) -> WorldModel:
    builders = {"glass-wall": _glass_wall, "novel-terrain": _novel_terrain,
                "slippery-strip": _slippery_strip}
    if name not in builders:
        raise ConfigError(f"unknown scene {name!r}; choose from {', '.join(SCENES)}")
    rng = np.random.default_rng([int(seed), SCENES.index(name)])
    return builders[name](rng, seed)


def in_zone(x: float, y: float, zone) -> bool:
    x0, y0, x1, y1 = zone
    return x0 <= x <= x1 and y0 <= y <= y1


def encounter_difficulties(world: WorldModel, log) -> list[float]:
    """Mean ground-truth difficulty over the motion steps spent in each encounter zone.

    Zones that were never entered give nan.
    """
    out = []
    for zone in world.annotations["encounter_zones"]:
        d = [r.difficulty for r in log if in_zone(r.x, r.y, zone)]
        out.append(float(np.mean(d)) if d else math.nan)
    return out
