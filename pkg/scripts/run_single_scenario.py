#!/usr/bin/env python3
"""Optimize a single scenario, then replay the resulting policy in the
frame-by-frame simulator and report analytic vs. simulated statistics.

Outputs dual_trace.csv, policy_table.txt and run_summary.csv into --out.
"""

import argparse
import csv
import pathlib

from crnshare.cli import main as cli_main


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", required=True,
                        help="scenario YAML (see README for keys)")
    parser.add_argument("--out", default="out/single",
                        help="output directory (default out/single)")
    parser.add_argument("--frames", type=int, default=None,
                        help="override the number of simulated frames")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the scenario seed")
    args = parser.parse_args(argv)

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    common = ["--config", args.config, "--out", str(out)]
    if args.seed is not None:
        common += ["--seed", str(args.seed)]

    code = cli_main(["optimize"] + common)
    if code != 0:
        return code

    sim_args = ["simulate"] + common \
        + ["--policy-table", str(out / "policy_table.txt")]
    if args.frames is not None:
        sim_args += ["--frames", str(args.frames)]
    code = cli_main(sim_args)
    if code != 0:
        return code

    with open(out / "run_summary.csv", newline="") as fh:
        rows = [r for r in csv.reader(fh) if not r[0].startswith("#")]
    width = max(len(h) for h in rows[0])
    for name, value in zip(*rows[:2]):
        print(f"{name:>{width}}  {value}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
