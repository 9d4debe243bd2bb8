#!/usr/bin/env python3
"""Sweep the rate target and compare the relay-assisted allocator against
the relay-free and time-hopping baselines.

Thin wrapper over ``crnshare sweep`` that also prints the resulting table.
Outputs sweep.csv (per-policy collision/rate/power rows) into --out.
"""

import argparse
import pathlib
import sys

from crnshare.cli import main as cli_main


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", required=True,
                        help="scenario YAML (see README for keys)")
    parser.add_argument("--out", default="out/sweep",
                        help="output directory (default out/sweep)")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the scenario seed")
    args = parser.parse_args(argv)

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cli_args = ["sweep", "--config", args.config, "--out", str(out)]
    if args.seed is not None:
        cli_args += ["--seed", str(args.seed)]
    code = cli_main(cli_args)
    table = out / "sweep.csv"
    if table.exists():
        sys.stdout.write(table.read_text())
    return code


if __name__ == "__main__":
    raise SystemExit(main())
