"""Four-variant ablation over generated worlds with the benchmark profile.

    python3 scripts/run_ablation.py --worlds 64 --episodes 5 --csv ablation.csv
"""

import argparse
import time
from pathlib import Path

from topnav.harness.batch import run_batch
from topnav.harness.config import load_config
from topnav.harness.episode import ABLATION_VARIANTS
from topnav.harness.export import write_summary_csv

DEFAULT_CONFIG = Path(__file__).resolve().parent.parent / "configs" / "benchmark.cfg"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--worlds", type=int, default=64)
    ap.add_argument("--episodes", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--config", default=str(DEFAULT_CONFIG))
    ap.add_argument("--csv", default="ablation.csv")
    args = ap.parse_args()

    cfg = load_config(args.config)
    t0 = time.perf_counter()
    summary = run_batch(args.worlds, args.episodes, ABLATION_VARIANTS, args.seed, args.workers, cfg)
    elapsed = time.perf_counter() - t0
    write_summary_csv(summary, args.csv, cfg.planner.time_budget_s)

    print(f"{'variant':>18}  {'SR':>14}  {'TD':>14}  {'VFT':>14}  {'UT':>14}  {'time_s':>12}")
    for name, st in summary.variants.items():
        cells = [f"{st.mean[k]:7.2f}±{st.stderr[k]:5.2f}" for k in ("sr", "td", "vft", "ut")]
        print(f"{name:>18}  " + "  ".join(cells) + f"  {st.mean['time_s']:6.2f}±{st.stderr['time_s']:4.2f}")
    top, oo = summary.variants["TOP"].mean, summary.variants["Obstacle-Only"].mean
    print(f"TOP - Obstacle-Only SR: {top['sr'] - oo['sr']:+.2f} points; "
          f"TD ratio {top['td'] / oo['td']:.3f}; {summary.episode_count} episodes in {elapsed:.1f} s")


if __name__ == "__main__":
    main()
