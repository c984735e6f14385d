"""Overcrowding tail curves at beta and 2 beta from the overcrowding config.

Prints log P(neighbour count >= rho r^d) against rho^2 for both temperatures
with the fitted slopes and the paired comparison.
"""

import argparse
import json
import math
from pathlib import Path

from coulomblab.experiment import load_config, run_experiment

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/overcrowding")
    ap.add_argument("--reuse", action="store_true")
    args = ap.parse_args()
    out = Path(args.out)
    if not args.reuse:
        run_experiment(load_config(ROOT / "configs" / "overcrowding.ini"), out)
    recs = [json.loads(x) for x in (out / "reports.jsonl").read_text().splitlines()]
    for r in recs:
        if r["name"] == "overcrowding_slope":
            print(f"beta = {r['params']['beta']:g}: slope {r['lhs']:.3f} +- {r['lhs_se']:.3f}")
            print("   rho    rho^2    P          log P")
            for rho, p, *_ in r["details"]["points"]:
                lp = math.log(p) if p > 0 else -math.inf
                print(f"  {rho:5.3f}  {rho * rho:6.4f}  {p:.3e}  {lp:8.3f}")
        if r["name"] == "overcrowding":
            d = r["details"]
            print(f"paired: slope difference {d['slope_difference']:.3f} +- {d['difference_se']:.3f} "
                  f"on rho = {d['common_rhos']}")


if __name__ == "__main__":
    main()
