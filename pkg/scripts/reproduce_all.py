"""Run ``teamcoord reproduce`` for every experiment and print the threshold lines.

    python scripts/reproduce_all.py --out-dir runs --seeds 10 --jobs 1
"""

import argparse
import sys

from teamcoord import cli


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default="runs")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--buffer", choices=("fsp", "equilibrium"), default="fsp")
    ap.add_argument("--experiments", nargs="*", default=sorted(cli.EXPERIMENTS))
    args = ap.parse_args()
    worst = 0
    for name in args.experiments:
        print(f"== {name}", flush=True)
        code = cli.main(["--seed", str(args.seed), "--out-dir", args.out_dir, "reproduce", name,
                         "--seeds", str(args.seeds), "--jobs", str(args.jobs), "--buffer", args.buffer])
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
