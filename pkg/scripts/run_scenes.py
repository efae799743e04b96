"""Scripted scenes: glass wall and repeated unfamiliar terrain.

    python3 scripts/run_scenes.py --seeds 5
"""

import argparse
from pathlib import Path

from topnav.harness.config import load_config
from topnav.harness.episode import VARIANTS, run_episode
from topnav.harness.scenes import encounter_difficulties, scripted_scene

DEFAULT_CONFIG = Path(__file__).resolve().parent.parent / "configs" / "benchmark.cfg"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--config", default=str(DEFAULT_CONFIG))
    args = ap.parse_args()
    cfg = load_config(args.config)

    print("glass-wall")
    for name in ("TOP", "Obstacle-Only"):
        runs = [run_episode(scripted_scene("glass-wall", s), VARIANTS[name], cfg, s, name,
                            keep_log=False) for s in range(args.seeds)]
        detail = " ".join(f"{'ok' if r.success else 'x'}({r.time_s:.1f}s,{r.collisions}c)" for r in runs)
        print(f"  {name:>16}: {sum(r.success for r in runs)}/{len(runs)}  {detail}")

    print("novel-terrain (mean difficulty in first / second encounter zone)")
    for name in ("TOP", "TOP-noCorrection"):
        for s in range(args.seeds):
            world = scripted_scene("novel-terrain", s)
            r = run_episode(world, VARIANTS[name], cfg, s, name)
            first, second = encounter_difficulties(world, r.log)
            print(f"  {name:>16} seed {s}: {first:.3f} / {second:.3f}  ratio {second / first:.2f}")


if __name__ == "__main__":
    main()
