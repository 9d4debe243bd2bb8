"""Command-line entry points: optimize, simulate, sweep, validate.

All outputs are plain CSV/text with a scenario-hash comment line; re-running
any command with identical inputs reproduces identical files byte for byte.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import dualopt, simulator, validate as validation
from .config import ConfigError, ScenarioConfig
from .policy import Policy, PolicyTableError, load_policy_table, \
    save_policy_table

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NOT_CONVERGED = 3
EXIT_CHECK_FAILED = 4


def _load_config(args) -> tuple:
    """Returns (config, used_defaults)."""
    if args.config is None:
        cfg = ScenarioConfig()
        used_defaults = True
    else:
        cfg = ScenarioConfig.from_file(args.config)
        used_defaults = False
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg, used_defaults


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_optimize(args) -> int:
    cfg, _ = _load_config(args)
    out = _outdir(args)
    result = dualopt.optimize_dual(cfg)
    chash = cfg.scenario_hash()
    result.trace_to_csv(out / "dual_trace.csv", chash)
    save_policy_table(Policy("proposed", chash, dual=result.nu),
                      out / "policy_table.txt")
    final = result.final
    print(f"scenario_hash={chash}")
    print(f"iterations={len(result.trace)} converged={result.converged}")
    print(f"rate1={final.rate1!r} rate2={final.rate2!r} "
          f"r_min={cfg.r_min!r}")
    print(f"mean_source_power={final.mean_source_power!r} "
          f"mean_relay_power={final.mean_relay_power!r}")
    print(f"collision_per_second={final.objective!r}")
    if not result.converged:
        if final.rate1 < cfg.r_min * 0.9 or final.rate2 < cfg.r_min * 0.9:
            print("rate target appears infeasible under the power budgets",
                  file=sys.stderr)
        else:
            print("stopped at the iteration limit before meeting tolerances",
                  file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg, _ = _load_config(args)
    out = _outdir(args)
    policy = load_policy_table(args.policy_table)
    chash = cfg.scenario_hash()
    if policy.config_hash != chash:
        print(f"policy table was built for scenario {policy.config_hash}, "
              f"but the config hashes to {chash}; refusing to run",
              file=sys.stderr)
        return EXIT_USAGE
    n_frames = args.frames if args.frames is not None else cfg.n_frames
    summary = simulator.run_policy(policy, cfg, n_frames, seed=cfg.seed,
                                   frames_csv=args.frames_csv)
    path = out / "run_summary.csv"
    with open(path, "w", newline="") as fh:
        fh.write(f"# scenario_hash={chash} policy={policy.variant} "
                 f"seed={cfg.seed}\n")
        fh.write("policy," + summary.CSV_HEADER + "\n")
        fh.write(policy.variant + "," + summary.csv_row() + "\n")
    print(f"collision_per_second={summary.collision_per_second!r} "
          f"achieved_rate={summary.achieved_rate!r}")
    return EXIT_OK


def _sweep_policies(arg: str) -> list:
    policies = [p.strip() for p in arg.split(",") if p.strip()]
    for p in policies:
        if p not in ("proposed", "relay-free", "time-hopping"):
            raise ConfigError(f"unknown policy in --policy: {p!r}")
    return policies


def cmd_sweep(args) -> int:
    cfg, _ = _load_config(args)
    out = _outdir(args)
    policies = _sweep_policies(args.policy)
    r_values = cfg.r_min_sweep if cfg.r_min_sweep else (cfg.r_min,)
    n_frames = args.frames if args.frames is not None else cfg.n_frames
    w_total = cfg.bandwidth * cfg.n_subchannels

    rows = []
    for variant in sorted(policies):
        for r_min in sorted(r_values):
            point_cfg = cfg.replace(r_min=float(r_min))
            cal = simulator.calibrate_baseline(variant, r_min, point_cfg)
            if cal.policy is not None:
                summary = simulator.run_policy(cal.policy, point_cfg, n_frames,
                                               seed=point_cfg.seed)
                coll, se = summary.collision_per_second, summary.collision_se
                achieved = summary.achieved_rate
            else:
                coll = se = achieved = float("nan")
            rows.append((variant, float(r_min), float(r_min) / w_total,
                         coll, se, achieved, int(cal.feasible)))

    ratio = _efficiency_ratio_at(rows, level=0.01)
    path = out / "sweep.csv"
    with open(path, "w", newline="") as fh:
        fh.write(f"# scenario_hash={cfg.scenario_hash()} seed={cfg.seed}\n")
        fh.write(f"# proposed_vs_relay_free_efficiency_ratio_at_collision_"
                 f"0.01={ratio}\n")
        fh.write("policy,r_min,efficiency,collision_per_second,"
                 "collision_se,achieved_rate,feasible\n")
        for variant, r_min, eff, coll, se, ach, feas in rows:
            fh.write(",".join([variant, repr(r_min), repr(eff), repr(coll),
                               repr(se), repr(ach), str(feas)]) + "\n")
    print(f"wrote {path} ({len(rows)} rows); "
          f"efficiency ratio at 0.01 s/s: {ratio}")
    return EXIT_OK


def _efficiency_ratio_at(rows, level: float):
    """Proposed/relay-free spectrum efficiency at equal collision level.

    Interpolates efficiency as a function of log collision over the
    feasible rows of each policy; returns 'n/a' when either curve does not
    bracket the level.
    """

    def eff_at(variant):
        pts = sorted((coll, eff) for v, _, eff, coll, _, _, feas in rows
                     if v == variant and feas and np.isfinite(coll)
                     and coll > 0)
        if len(pts) < 2:
            return None
        colls = np.array([p[0] for p in pts])
        effs = np.array([p[1] for p in pts])
        if level < colls[0] or level > colls[-1]:
            return None
        return float(np.interp(np.log(level), np.log(colls), effs))

    num = eff_at("proposed")
    den = eff_at("relay-free")
    if num is None or den is None or den == 0:
        return "n/a"
    return repr(num / den)


def cmd_validate(args) -> int:
    cfg, used_defaults = _load_config(args)
    out = _outdir(args)
    results = validation.run_all_checks(cfg)
    path = out / "validate_report.txt"
    validation.write_report(results, path, cfg.scenario_hash(), used_defaults)
    for res in results:
        print(res.line())
    if not all(r.passed for r in results):
        return EXIT_CHECK_FAILED
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crnshare",
        description="Optimize and simulate relay-network spectrum sharing "
                    "against CTMC ad-hoc traffic.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, default=None,
                       help="scenario YAML (omit for built-in defaults)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the master seed")
        p.add_argument("--out", type=Path, default=Path("."),
                       help="output directory")

    p_opt = sub.add_parser("optimize", help="off-line dual optimization")
    common(p_opt)
    p_opt.set_defaults(func=cmd_optimize)

    p_sim = sub.add_parser("simulate", help="frame-level Monte-Carlo replay")
    common(p_sim)
    p_sim.add_argument("--policy-table", type=Path, required=True)
    p_sim.add_argument("--frames", type=int, default=None)
    p_sim.add_argument("--frames-csv", type=Path, default=None,
                       help="also stream per-frame results to this CSV")
    p_sim.set_defaults(func=cmd_simulate)

    p_swp = sub.add_parser("sweep", help="rate-target sweep over policies")
    common(p_swp)
    p_swp.add_argument("--policy", default="proposed,relay-free,time-hopping",
                       help="comma-separated policy list")
    p_swp.add_argument("--frames", type=int, default=None)
    p_swp.set_defaults(func=cmd_sweep)

    p_val = sub.add_parser("validate", help="oracle cross-check suite")
    common(p_val)
    p_val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, PolicyTableError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
