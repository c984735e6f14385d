"""Run shipped experiment configs and print one summary block per config.

    python3 scripts/run_configs.py                 # every configs/*.ini
    python3 scripts/run_configs.py pilot kpoint_one
"""

import argparse
import time
from pathlib import Path

from coulomblab.experiment import load_config, run_experiment

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("names", nargs="*", help="config stems (default: all)")
    ap.add_argument("--out", default="runs", help="parent directory for outputs")
    ap.add_argument("--threads", type=int)
    args = ap.parse_args()
    paths = sorted((ROOT / "configs").glob("*.ini"))
    if args.names:
        paths = [ROOT / "configs" / f"{n}.ini" for n in args.names]
    worst = 0
    for path in paths:
        t0 = time.perf_counter()
        out = Path(args.out) / path.stem
        status = run_experiment(load_config(path), out, threads=args.threads)
        worst = max(worst, status)
        print(f"== {path.stem} (exit {status}, {time.perf_counter() - t0:.0f}s) ==")
        print((out / "summary.txt").read_text())
    return worst


if __name__ == "__main__":
    raise SystemExit(main())
