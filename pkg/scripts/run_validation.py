#!/usr/bin/env python3
"""Run the built-in cross-check suite (closed forms vs. independent
brute-force references) and print the report.

Exit status is 0 when every check passes, 4 otherwise.
"""

import argparse
import pathlib
import sys

from crnshare.cli import main as cli_main


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default=None,
                        help="scenario YAML (defaults to the built-in scenario)")
    parser.add_argument("--out", default="out/validate",
                        help="output directory (default out/validate)")
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args(argv)

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cli_args = ["validate", "--out", str(out)]
    if args.config is not None:
        cli_args += ["--config", args.config]
    if args.seed is not None:
        cli_args += ["--seed", str(args.seed)]
    code = cli_main(cli_args)
    report = out / "validate_report.txt"
    if report.exists():
        sys.stdout.write(report.read_text())
    return code


if __name__ == "__main__":
    raise SystemExit(main())
