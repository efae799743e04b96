"""Command-line entry point: generate worlds, run episodes and batches, build scenes.

Exit codes: 0 success, 2 usage or configuration error, 3 episode aborted.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..sim import WorldModel, generate_world
from .batch import run_batch
from .config import ConfigError, load_config
from .episode import VARIANTS, EpisodeAborted, run_episode, variant
from .export import ExportError, dump_layers, write_jsonl, write_summary_csv, write_text
from .scenes import SCENES, scripted_scene

EXIT_OK, EXIT_USAGE, EXIT_ABORT = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _write_world(world: WorldModel, path: str) -> None:
    write_text(path, world.to_text())


def _read_world(path: str) -> WorldModel:
    try:
        return WorldModel.from_text(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read world {path}: {exc.strerror or exc}") from exc
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"malformed world file {path}: {exc}") from exc


def cmd_gen(args, cfg) -> int:
    _write_world(generate_world(args.seed, cfg.world), args.out)
    return EXIT_OK


def cmd_scene(args, cfg) -> int:
    _write_world(scripted_scene(args.name, args.seed), args.out)
    return EXIT_OK


def cmd_run(args, cfg) -> int:
    try:
        flags = variant(args.variant)
    except KeyError as exc:
        raise ConfigError(exc.args[0]) from None
    world = _read_world(args.world)
    result = run_episode(world, flags, cfg, args.episode_seed, args.variant,
                         snapshot_layers=args.dump_layers is not None)
    write_jsonl(result.log, args.log)
    if args.dump_layers is not None:
        dump_layers(result.log, args.dump_layers)
    print(f"{args.variant}: success={result.success} time_s={result.time_s:.2f} "
          f"td={result.td_percent:.2f} vft={result.vft_percent:.2f} "
          f"ut={result.ut_proxy_percent:.2f} collisions={result.collisions}")
    return EXIT_OK


def cmd_batch(args, cfg) -> int:
    names = [v.strip() for v in args.variants.split(",") if v.strip()]
    summary = run_batch(args.worlds, args.episodes, names, args.seed, args.workers, cfg)
    write_summary_csv(summary, args.csv, cfg.planner.time_budget_s)
    for name, stats in summary.variants.items():
        m, s = stats.mean, stats.stderr
        print(f"{name:>18}: SR {m['sr']:6.2f}±{s['sr']:.2f}  TD {m['td']:6.2f}±{s['td']:.2f}  "
              f"VFT {m['vft']:6.2f}±{s['vft']:.2f}  time {m['time_s']:5.2f}s")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="topnav", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="sectioned key-value file applied over the defaults")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a random world")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="run one episode and write its step log")
    r.add_argument("--world", required=True)
    r.add_argument("--variant", required=True, help=", ".join(VARIANTS))
    r.add_argument("--log", required=True)
    r.add_argument("--dump-layers", metavar="DIR")
    r.add_argument("--episode-seed", type=int, default=0)
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("batch", help="run variants over generated worlds and write a CSV summary")
    b.add_argument("--worlds", type=int, required=True)
    b.add_argument("--episodes", type=int, required=True)
    b.add_argument("--variants", required=True, help="comma-separated variant names")
    b.add_argument("--seed", type=int, required=True)
    b.add_argument("--csv", required=True)
    b.add_argument("--workers", type=int, default=1)
    b.set_defaults(func=cmd_batch)

    s = sub.add_parser("scene", help="build a scripted scene")
    s.add_argument("--name", required=True, help=", ".join(SCENES))
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_scene)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EpisodeAborted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
