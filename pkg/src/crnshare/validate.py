"""Self-check suite behind ``crnshare validate``.

Cross-checks the closed forms against the brute-force oracles and the core
structural invariants, producing a line-per-check report. Kept separate
from the test suite so a deployed scenario can be validated without pytest.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import oracle
from .allocator import DualPoint, LN2, ratio_phase1, solve_realization
from .channel import NetworkStateInfo
from .config import ScenarioConfig
from .rngtools import substream
from .traffic import TrafficParams, phi_collision, transition_prob

__all__ = ["CheckResult", "run_all_checks", "write_report"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    measured: float
    threshold: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name}: measured={self.measured:.3e} "
                f"threshold={self.threshold:.1e}")


def _random_traffic(rng) -> TrafficParams:
    return TrafficParams(rate_to_active=rng.uniform(0.2, 4.0),
                         rate_to_idle=rng.uniform(0.2, 4.0),
                         frame_duration=rng.uniform(0.5, 2.0),
                         phase_split=rng.uniform(0.2, 0.8))


def check_phi_vs_quadrature(rng, n_tuples: int = 200) -> CheckResult:
    worst = 0.0
    for _ in range(n_tuples):
        params = _random_traffic(rng)
        phase = int(rng.integers(1, 3))
        sensed = int(rng.integers(0, 2))
        theta = rng.uniform(0.0, params.phase_length(phase))
        err = abs(phi_collision(params, phase, sensed, theta)
                  - oracle.quad_phi(params, phase, sensed, theta))
        worst = max(worst, err)
    return CheckResult("phi_closed_form_vs_quadrature", worst < 1e-9, worst,
                       1e-9)


def check_chapman_kolmogorov(rng, n_tuples: int = 50) -> CheckResult:
    worst = 0.0
    for _ in range(n_tuples):
        params = _random_traffic(rng)
        s, t = rng.uniform(0.0, 10.0, size=2)
        p_s = np.array([[transition_prob(params, i, j, s) for j in (0, 1)]
                        for i in (0, 1)])
        p_t = np.array([[transition_prob(params, i, j, t) for j in (0, 1)]
                        for i in (0, 1)])
        p_st = np.array([[transition_prob(params, i, j, s + t)
                          for j in (0, 1)] for i in (0, 1)])
        worst = max(worst, float(np.abs(p_s @ p_t - p_st).max()))
    return CheckResult("chapman_kolmogorov", worst < 1e-12, worst, 1e-12)


def check_placement_dominance(rng, n_tuples: int = 20,
                              n_offsets: int = 41) -> CheckResult:
    worst = -np.inf
    for _ in range(n_tuples):
        params = _random_traffic(rng)
        phase = int(rng.integers(1, 3))
        sensed = int(rng.integers(0, 2))
        theta = rng.uniform(0.05, params.phase_length(phase))
        offsets, values = oracle.placement_enumerate(params, theta, phase,
                                                     sensed, n_offsets)
        flush = values[0] if sensed == 0 else values[-1]
        worst = max(worst, float(flush - values.min()))
    return CheckResult("flush_placement_dominance", worst < 1e-9, worst, 1e-9)


def check_ratio_stationarity(rng, n_tuples: int = 500) -> CheckResult:
    worst = 0.0
    for _ in range(n_tuples):
        nu = DualPoint(rng.uniform(0, 3), rng.uniform(0, 3),
                       rng.uniform(0.1, 3), rng.uniform(0.1, 3))
        g_sr = rng.exponential(4.0)
        g_sd = rng.exponential(1.0)
        x = ratio_phase1(nu, g_sr, g_sd)
        if x > 0:
            big = max(g_sr, g_sd)
            res = abs(nu.rate1_price * big / (1 + x * big)
                      + nu.rate2_price * g_sd / (1 + x * g_sd)
                      - nu.source_power_price * LN2)
            worst = max(worst, res)
    return CheckResult("phase1_ratio_stationarity_residual", worst < 1e-10,
                       worst, 1e-10)


def check_kkt_vs_grid(rng, n_toys: int = 3) -> CheckResult:
    worst = 0.0
    for _ in range(n_toys):
        inst = oracle.ToyInstance(
            g_sr=[rng.uniform(1, 8)], g_rd=[rng.uniform(1, 8)],
            g_sd=[rng.uniform(0.5, 3)],
            x=int(rng.integers(0, 2)), y=int(rng.integers(0, 2)),
            params=_random_traffic(rng))
        nu = DualPoint(rng.uniform(0.5, 2), rng.uniform(0.5, 2),
                       rng.uniform(0.5, 2), rng.uniform(0.5, 2))
        ref = oracle.grid_search(inst, nu)
        nsi = NetworkStateInfo(g_sr=inst.g_sr, g_rd=inst.g_rd, g_sd=inst.g_sd,
                               x=np.array([inst.x]), y=np.array([inst.y]))
        from .allocator import BandMap
        alloc = solve_realization(nu, nsi, BandMap(((0,),)), inst.params)
        coords = np.array([alloc.p_s1[0], alloc.p_s2[0], alloc.p_r[0],
                           alloc.theta1[0], alloc.theta2[0]])
        ref_coords = np.array([ref.p_s1[0], ref.p_s2[0], ref.p_r[0],
                               ref.theta1, ref.theta2])
        worst = max(worst, float(np.abs(coords - ref_coords).max()))
    return CheckResult("kkt_vs_brute_force", worst < 1e-3, worst, 1e-3)


def run_all_checks(cfg: ScenarioConfig, fast: bool = True) -> list:
    rng = substream(cfg.seed, "validate")
    return [
        check_phi_vs_quadrature(rng, 200),
        check_chapman_kolmogorov(rng),
        check_placement_dominance(rng),
        check_ratio_stationarity(rng),
        check_kkt_vs_grid(rng),
    ]


def write_report(results, path, scenario_hash: str, used_defaults: bool):
    with open(path, "w", newline="") as fh:
        fh.write(f"# scenario_hash={scenario_hash}\n")
        if used_defaults:
            fh.write("# config: built-in defaults\n")
        for res in results:
            fh.write(res.line() + "\n")
        overall = "PASS" if all(r.passed for r in results) else "FAIL"
        fh.write(f"overall {overall}\n")
