"""Off-line projected-subgradient ascent on the four constraint prices.

The expectations in the rate/power constraints have no closed form, so each
subgradient is a Monte-Carlo average: draw NSI realizations (gains from the
channel model, sensing outcomes from the CTMC laws), solve the closed-form
primal for each, and average the rate, collision and power terms. By
default the same realization set is reused across iterations (common
random numbers), which keeps the ascent trajectory smooth and replayable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import channel
from .allocator import (BandMap, BatchAllocation, DualPoint, solve_batch)
from .config import ScenarioConfig
from .rngtools import substream
from .traffic import ACTIVE, IDLE, TrafficParams, phi_collision, transition_prob

__all__ = [
    "NsiBatch",
    "SubgradientSample",
    "DualTraceRow",
    "DualResult",
    "sample_nsi_batch",
    "evaluate_rates",
    "mc_subgradient",
    "optimize_dual",
]

_PRICE_FLOOR = np.array([0.0, 0.0, 1e-12, 1e-12])


@dataclass(frozen=True)
class NsiBatch:
    """A batch of NSI realizations: (S, N) gains and (S, M) sensing outcomes."""

    g_sr: np.ndarray
    g_rd: np.ndarray
    g_sd: np.ndarray
    x: np.ndarray
    y: np.ndarray

    @property
    def n_samples(self) -> int:
        return self.g_sd.shape[0]


@dataclass(frozen=True)
class SubgradientSample:
    """MC estimate of the constraint subgradient at one dual point."""

    h: np.ndarray          # ((Rmin-R1)/W, (Rmin-R2)/W, E[Ps]-Psmax, E[Pr]-Prmax)
    stderr: np.ndarray     # MC standard error of each component
    objective: float       # mean collision time per second
    rate1: float
    rate2: float
    mean_source_power: float
    mean_relay_power: float


@dataclass(frozen=True)
class DualTraceRow:
    iteration: int
    nu: DualPoint
    step: float
    dual_objective: float
    h: np.ndarray
    violations: np.ndarray  # normalized (rate1, rate2, source, relay)
    objective: float


@dataclass(frozen=True)
class DualResult:
    nu: DualPoint
    trace: tuple
    converged: bool
    final: SubgradientSample

    def trace_to_csv(self, path, scenario_hash: str):
        with open(path, "w", newline="") as fh:
            fh.write(f"# scenario_hash={scenario_hash}\n")
            fh.write("iter,zeta,sigma,epsilon,eta,step,h1,h2,h3,h4,"
                     "i1_est,dual_obj\n")
            for row in self.trace:
                nu = row.nu.as_array()
                vals = [row.iteration, *nu, row.step, *row.h,
                        row.objective, row.dual_objective]
                fh.write(",".join(_fmt(v) for v in vals) + "\n")


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def sample_nsi_batch(cfg: ScenarioConfig, n_samples: int,
                     rng: np.random.Generator, relay_free: bool = False) -> NsiBatch:
    """Draw NSI realizations: gains i.i.d. across frames, sensing from the CTMC.

    The phase-1 outcome follows the stationary law; the phase-2 outcome is
    drawn from the transition law over the phase-1 duration conditioned on
    the phase-1 outcome, which is their joint law under stationarity.
    """
    if cfg.deterministic is not None:
        det = cfg.deterministic
        tile = lambda key: np.tile(np.asarray(det[key], dtype=float),
                                   (n_samples, 1))
        g_sr, g_rd, g_sd = tile("g_sr"), tile("g_rd"), tile("g_sd")
        x = np.tile(np.asarray(det["x"], dtype=int), (n_samples, 1))
        y = np.tile(np.asarray(det["y"], dtype=int), (n_samples, 1))
    else:
        g_sr, g_rd, g_sd = channel.sample_gains_batch(cfg.channel_params(),
                                                      n_samples, rng)
        params = cfg.traffic_params()
        m = cfg.n_bands
        p_active = params.stationary_active
        x = (rng.random((n_samples, m)) < p_active).astype(int)
        elapsed = params.phase_split * params.frame_duration
        p_active_given_x = np.where(
            x == ACTIVE,
            transition_prob(params, ACTIVE, ACTIVE, elapsed),
            transition_prob(params, IDLE, ACTIVE, elapsed))
        y = (rng.random((n_samples, m)) < p_active_given_x).astype(int)
    if relay_free:
        g_sr = np.zeros_like(g_sr)
        g_rd = np.zeros_like(g_rd)
    return NsiBatch(g_sr=g_sr, g_rd=g_rd, g_sd=g_sd, x=x, y=y)


def _phi_batch(params: TrafficParams, phase: int, sensed: np.ndarray,
               theta: np.ndarray) -> np.ndarray:
    phi_idle = phi_collision(params, phase, IDLE, theta)
    phi_active = phi_collision(params, phase, ACTIVE, theta)
    return np.where(sensed == ACTIVE, phi_active, phi_idle)


def per_sample_terms(alloc: BatchAllocation, nsi: NsiBatch, cfg: ScenarioConfig):
    """Per-realization rate sums (bit/s), collision time, and power sums."""
    band_map = cfg.make_band_map()
    params = cfg.traffic_params()
    band_of = band_map.band_of
    th1 = alloc.theta1[:, band_of]
    th2 = alloc.theta2[:, band_of]
    g_big = np.maximum(nsi.g_sr, nsi.g_sd)
    log2 = lambda z: np.log1p(z) / np.log(2.0)
    r1 = cfg.bandwidth * np.sum(
        th2 * log2(alloc.ratio_s2 * nsi.g_sd)
        + th1 * log2(alloc.ratio_s1 * g_big), axis=1)
    r2 = cfg.bandwidth * np.sum(
        th1 * log2(alloc.ratio_s1 * nsi.g_sd)
        + th2 * log2(alloc.ratio_s2 * nsi.g_sd + alloc.ratio_r * nsi.g_rd),
        axis=1)
    i1 = np.sum(_phi_batch(params, 1, nsi.x, alloc.theta1)
                + _phi_batch(params, 2, nsi.y, alloc.theta2), axis=1)
    p_s = np.sum(alloc.p_s1 + alloc.p_s2, axis=1)
    p_r = np.sum(alloc.p_r, axis=1)
    return r1, r2, i1, p_s, p_r


def evaluate_rates(alloc: BatchAllocation, nsi: NsiBatch, cfg: ScenarioConfig):
    """Sample means (R1, R2, I1) of the rate and collision expectations."""
    r1, r2, i1, _, _ = per_sample_terms(alloc, nsi, cfg)
    return float(r1.mean()), float(r2.mean()), float(i1.mean())


def _subgradient_from_batch(nu: DualPoint, nsi: NsiBatch, cfg: ScenarioConfig,
                            fixed_theta: float | None = None) -> SubgradientSample:
    band_map = cfg.make_band_map()
    params = cfg.traffic_params()
    alloc = solve_batch(nu, nsi.g_sr, nsi.g_rd, nsi.g_sd, nsi.x, nsi.y,
                        band_map, params)
    if fixed_theta is not None:
        th1 = np.full_like(alloc.theta1, min(fixed_theta, cfg.alpha))
        th2 = np.full_like(alloc.theta2, min(fixed_theta, 1.0 - cfg.alpha))
        band_of = band_map.band_of
        alloc = BatchAllocation(
            ratio_s1=alloc.ratio_s1, ratio_s2=alloc.ratio_s2,
            ratio_r=alloc.ratio_r, theta1=th1, theta2=th2,
            p_s1=alloc.ratio_s1 * th1[:, band_of],
            p_s2=alloc.ratio_s2 * th2[:, band_of],
            p_r=alloc.ratio_r * th2[:, band_of])
    r1, r2, i1, p_s, p_r = per_sample_terms(alloc, nsi, cfg)
    n = len(r1)
    sem = lambda a: float(a.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    w = cfg.bandwidth
    h = np.array([
        (cfg.r_min - r1.mean()) / w,
        (cfg.r_min - r2.mean()) / w,
        p_s.mean() - cfg.p_s_max,
        p_r.mean() - cfg.p_r_max,
    ])
    stderr = np.array([sem(r1) / w, sem(r2) / w, sem(p_s), sem(p_r)])
    return SubgradientSample(
        h=h, stderr=stderr,
        objective=float(i1.mean()) / cfg.frame_duration,
        rate1=float(r1.mean()), rate2=float(r2.mean()),
        mean_source_power=float(p_s.mean()), mean_relay_power=float(p_r.mean()))


def mc_subgradient(nu: DualPoint, cfg: ScenarioConfig, n_samples: int,
                   rng: np.random.Generator,
                   relay_free: bool = False) -> SubgradientSample:
    """Draw a fresh NSI batch and estimate the subgradient at ``nu``."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    nsi = sample_nsi_batch(cfg, n_samples, rng, relay_free=relay_free)
    return _subgradient_from_batch(nu, nsi, cfg)


def _violations(sample: SubgradientSample, cfg: ScenarioConfig) -> np.ndarray:
    rate_scale = max(cfg.r_min, 1e-12)
    return np.array([
        max(0.0, cfg.r_min - sample.rate1) / rate_scale,
        max(0.0, cfg.r_min - sample.rate2) / rate_scale,
        max(0.0, sample.mean_source_power - cfg.p_s_max) / cfg.p_s_max,
        max(0.0, sample.mean_relay_power - cfg.p_r_max) / cfg.p_r_max,
    ])


def optimize_dual(cfg: ScenarioConfig, schedule=None, rng=None,
                  relay_free: bool = False, fixed_theta: float | None = None,
                  fresh_samples: bool = False) -> DualResult:
    """Projected subgradient ascent; returns the best near-feasible iterate.

    ``schedule`` maps the iteration index to a step size (default
    step_a / (step_b + t), diminishing and non-summable). The source and
    relay power prices are floored at 1e-12 so the closed forms stay
    defined while complementary slackness is preserved numerically.
    """
    if rng is None:
        rng = substream(cfg.seed, "mc")
    if schedule is None:
        schedule = lambda t: cfg.step_a / (cfg.step_b + t)
    base_nsi = None
    if not fresh_samples:
        base_nsi = sample_nsi_batch(cfg, cfg.mc_samples, rng,
                                    relay_free=relay_free)

    nu_arr = np.array([1.0, 1.0, 1.0 / cfg.p_s_max, 1.0 / cfg.p_r_max])
    trace = []
    best_score = -np.inf
    best = None
    score_history = []
    streak = 0
    converged = False
    for it in range(cfg.max_iters):
        nu = DualPoint.from_array(nu_arr)
        if fresh_samples:
            nsi = sample_nsi_batch(cfg, cfg.mc_samples, rng,
                                   relay_free=relay_free)
        else:
            nsi = base_nsi
        sample = _subgradient_from_batch(nu, nsi, cfg, fixed_theta=fixed_theta)
        dual_obj = sample.objective + float(nu_arr @ sample.h)
        viol = _violations(sample, cfg)
        step = float(schedule(it))
        trace.append(DualTraceRow(iteration=it, nu=nu, step=step,
                                  dual_objective=dual_obj, h=sample.h.copy(),
                                  violations=viol, objective=sample.objective))
        # prefer the lowest-collision iterate among those inside tolerance;
        # a large penalty keeps clearly infeasible iterates out of the running
        score = -sample.objective - 1e3 * max(0.0, viol.max() - cfg.stop_tol)
        if score > best_score:
            best_score = score
            best = (nu, sample)
        score_history.append(score)
        # stop only once feasible iterates have stopped improving from one
        # patience-sized window to the next: feasibility alone would freeze
        # the prices far from the optimum. Comparing window medians of the
        # raw score keeps a single noise dip from masking steady progress.
        k = cfg.stop_patience
        stalled = False
        if it + 1 >= 2 * k:
            recent = float(np.median(score_history[-k:]))
            prior = float(np.median(score_history[-2 * k:-k]))
            stalled = recent <= prior + 1e-4 * max(abs(best_score), 1e-9)
        if viol.max() < cfg.stop_tol and stalled:
            streak += 1
            if streak >= cfg.stop_patience:
                converged = True
                break
        else:
            streak = 0
        nu_arr = np.maximum(nu_arr + step * sample.h, _PRICE_FLOOR)

    nu, sample = best
    if not converged:
        # max-iteration stop: report best-so-far; caller checks the flag
        converged = _violations(sample, cfg).max() < cfg.stop_tol
    return DualResult(nu=nu, trace=tuple(trace), converged=converged,
                      final=sample)
