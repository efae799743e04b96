"""Seeded multi-world batches and their per-variant summary."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..sim import generate_world
from .config import Config, ConfigError
from .episode import EpisodeResult, run_episode, variant

SUMMARY_FIELDS = ("sr", "td", "vft", "ut", "time_s")


@dataclass(frozen=True)
class VariantStats:
    n: int
    mean: dict[str, float]
    stderr: dict[str, float]


@dataclass
class BatchSummary:
    variants: dict[str, VariantStats]
    episode_count: int
    results: list[EpisodeResult] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.episode_count <= 0:
            raise ValueError("a batch summary needs at least one episode")

    def mean(self, name: str, metric: str) -> float:
        return self.variants[name].mean[metric]


def world_seeds(n_worlds: int, base_seed: int) -> list[int]:
    return [int(base_seed) + i for i in range(n_worlds)]


def _stats(results: list[EpisodeResult]) -> VariantStats:
    cols = {
        "sr": [100.0 * r.success for r in results],
        "td": [r.td_percent for r in results],
        "vft": [r.vft_percent for r in results],
        "ut": [r.ut_proxy_percent for r in results],
        "time_s": [r.time_s for r in results],
    }
    n = len(results)
    mean, se = {}, {}
    for k in SUMMARY_FIELDS:
        a = np.asarray(cols[k], dtype=float)
        mean[k] = float(a.mean())
        se[k] = float(a.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return VariantStats(n, mean, se)


def summarize(results: list[EpisodeResult], order: list[str]) -> BatchSummary:
    """Pure fold over finished episodes; input order does not matter."""
    key = lambda r: (r.world_seed, r.seed)  # noqa: E731
    by_variant = {name: sorted((r for r in results if r.variant == name), key=key)
                  for name in order}
    return BatchSummary({k: _stats(v) for k, v in by_variant.items() if v},
                        len(results), sorted(results, key=lambda r: (r.variant, *key(r))))


def _world_job(args) -> list[EpisodeResult]:
    world_seed, episodes, names, cfg = args
    world = generate_world(world_seed, cfg.world)
    return [run_episode(world, variant(name), cfg, ep, name, keep_log=False)
            for name in names for ep in range(episodes)]


def run_batch(n_worlds: int, episodes_per_world: int, variants, base_seed: int = 0,
              parallelism: int = 1, cfg: Config | None = None) -> BatchSummary:
    """Run every variant on ``n_worlds`` generated worlds, ``episodes_per_world`` times each.

    World i uses seed ``base_seed + i`` and episode e uses seed e, so the
    summary does not depend on ``parallelism``.
    """
    names = list(variants)
    if not names:
        raise ConfigError("no variants requested")
    for name in names:
        try:
            variant(name)
        except KeyError as exc:
            raise ConfigError(str(exc.args[0])) from None
    if n_worlds < 1 or episodes_per_world < 1:
        raise ConfigError("n_worlds and episodes_per_world must be at least 1")
    cfg = cfg or Config()
    jobs = [(s, episodes_per_world, names, cfg) for s in world_seeds(n_worlds, base_seed)]
    if parallelism <= 1:
        chunks = [_world_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            chunks = list(pool.map(_world_job, jobs))
    return summarize([r for c in chunks for r in c], names)
