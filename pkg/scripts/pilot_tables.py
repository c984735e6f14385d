"""Pilot conditional gas: number distribution, three-point constants per seed, de-indexing.

Prints the tables behind the pilot acceptance checks from a finished run
directory (default: runs a fresh pilot into runs/pilot).
"""

import argparse
import json
import math
from pathlib import Path

from coulomblab.experiment import load_config, run_experiment

ROOT = Path(__file__).resolve().parents[1]


def load(out):
    return [json.loads(x) for x in (out / "reports.jsonl").read_text().splitlines()]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/pilot")
    ap.add_argument("--reuse", action="store_true", help="read an existing run instead of running")
    args = ap.parse_args()
    out = Path(args.out)
    if not args.reuse:
        run_experiment(load_config(ROOT / "configs" / "pilot.ini"), out)
    recs = load(out)

    (dist,) = [r for r in recs if r["name"] == "distribution"]
    print("n   P(N = n)      s.e.")
    for n, (p, se) in sorted(dist["details"]["probs"].items(), key=lambda kv: int(kv[0])):
        print(f"{n:>2}  {p:.6f}  {se:.2e}")

    print("\nthree-point constants per seed (literal max, bad-free max)")
    for r in recs:
        if r["name"] == "three_point":
            print(f"seed {r['params']['seed']:>20}  {r['implied_constant']:.4f}  {r['details']['bad_free_max']:.4f}")
    (st,) = [r for r in recs if r["name"] == "three_point_stability"]
    print(f"relative spread: literal {st['details']['relative_spread']:.3f}, "
          f"bad-free {st['details']['bad_free_relative_spread']:.3f}")

    print("\nde-indexing: n, binom * P(labelled), P(count = n), z")
    for r in recs:
        if r["name"] == "deindexing":
            z = (r["lhs"] - r["rhs"]) / math.hypot(r["lhs_se"], r["rhs_se"])
            print(f"{r['params']['n']:>2}  {r['lhs']:.6f}  {r['rhs']:.6f}  {z:+.2f}")


if __name__ == "__main__":
    main()
