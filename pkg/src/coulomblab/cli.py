"""Command line: ``coulomblab run|validate|report``."""

from __future__ import annotations

import argparse
import sys

from coulomblab.experiment import ConfigError, load_config, report, run_experiment


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="coulomblab", description="Monte Carlo checks for conditioned Coulomb gases")
    sub = ap.add_subparsers(dest="cmd", required=True)
    p_run = sub.add_parser("run", help="run the chains and checks of a config")
    p_run.add_argument("config")
    p_run.add_argument("--out", help="output directory (overrides [output] dir)")
    p_run.add_argument("--threads", type=int, help="worker threads (default: COULOMBLAB_THREADS or CPU count)")
    p_val = sub.add_parser("validate", help="parse a config and print its canonical form")
    p_val.add_argument("config")
    p_rep = sub.add_parser("report", help="re-render the summary of an output directory")
    p_rep.add_argument("dir")
    args = ap.parse_args(argv)

    if args.cmd == "report":
        try:
            summary, status = report(args.dir)
        except FileNotFoundError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        sys.stdout.write(summary)
        return status

    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"{args.config}: {exc}", file=sys.stderr)
        return 2
    if args.cmd == "validate":
        sys.stdout.write(cfg.to_text())
        return 0
    status = run_experiment(cfg, args.out, threads=args.threads)
    out = args.out or cfg.output_dir
    with open(f"{out}/summary.txt") as fh:
        sys.stdout.write(fh.read())
    return status


if __name__ == "__main__":
    sys.exit(main())
