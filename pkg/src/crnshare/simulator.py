"""Frame-level Monte-Carlo replay of a transmission policy.

Each frame draws fresh channel gains and a full CTMC traffic path per band;
sensing outcomes are read off the path at the phase boundaries (perfect
sensing by construction), the policy maps the frame's NSI to an allocation,
and the frame accumulates realized collision time against the sampled path,
the analytic rate terms, and the spent powers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import channel, dualopt
from .allocator import BatchAllocation, DualPoint, ratio_phase1, ratio_phase2, \
    solve_batch
from .config import ScenarioConfig
from .policy import Policy
from .rngtools import substream
from .traffic import ACTIVE, IDLE, IntervalSet, Trajectory, TrafficParams, \
    collision_time

__all__ = [
    "PathBatch",
    "FrameResult",
    "RunSummary",
    "CalibrationResult",
    "sample_paths_batch",
    "time_hopping_offsets",
    "run_frame",
    "run_policy",
    "calibrate_baseline",
]

_CHUNK = 20000


@dataclass(frozen=True)
class PathBatch:
    """CTMC paths for (frames, bands): initial states and transition times."""

    initial: np.ndarray   # (F, M) ints
    times: np.ndarray     # (F, M, K) cumulative; last entry >= horizon
    horizon: float

    def sensing(self, at: float):
        """State of every path at time ``at`` (vectorized)."""
        flips = (self.times < at).sum(axis=2)
        return self.initial ^ (flips & 1)

    def trajectory(self, frame: int, band: int) -> Trajectory:
        t = self.times[frame, band]
        return Trajectory(initial=int(self.initial[frame, band]),
                          times=t[t < self.horizon], horizon=self.horizon)


@dataclass(frozen=True)
class FrameResult:
    collision: float
    rate1_term: float
    rate2_term: float
    source_energy: float
    relay_energy: float
    x: np.ndarray
    y: np.ndarray
    theta1: np.ndarray
    theta2: np.ndarray


@dataclass(frozen=True)
class RunSummary:
    n_frames: int
    collision_per_second: float
    collision_se: float
    rate1_mean: float
    rate2_mean: float
    achieved_rate: float
    achieved_rate_se: float
    mean_source_power: float
    mean_relay_power: float

    CSV_HEADER = ("n_frames,collision_per_second,collision_se,rate1_mean,"
                  "rate2_mean,achieved_rate,achieved_rate_se,"
                  "mean_source_power,mean_relay_power")

    def csv_row(self) -> str:
        vals = [self.n_frames, self.collision_per_second, self.collision_se,
                self.rate1_mean, self.rate2_mean, self.achieved_rate,
                self.achieved_rate_se, self.mean_source_power,
                self.mean_relay_power]
        return ",".join(str(v) if isinstance(v, int) else repr(float(v))
                        for v in vals)


def sample_paths_batch(params: TrafficParams, n_frames: int, n_bands: int,
                       rng: np.random.Generator) -> PathBatch:
    """Sample stationary CTMC paths over one frame for every (frame, band).

    Holding times alternate between the IDLE-exit and ACTIVE-exit
    exponentials; the transition-time matrix is widened (redrawing in full,
    so the result depends only on the seed) until every path covers the
    frame.
    """
    lam = params.rate_to_active
    mu = params.rate_to_idle
    horizon = params.frame_duration
    initial = (rng.random((n_frames, n_bands))
               < params.stationary_active).astype(int)
    k = max(16, int(8 * (lam + mu) * horizon))
    u = rng.random((n_frames, n_bands, k))
    while True:
        parity = np.arange(u.shape[2]) & 1
        states = initial[..., None] ^ parity
        rates = np.where(states == ACTIVE, mu, lam)
        times = np.cumsum(-np.log1p(-u) / rates, axis=2)
        if np.all(times[..., -1] >= horizon):
            return PathBatch(initial=initial, times=times, horizon=horizon)
        extra = rng.random((n_frames, n_bands, u.shape[2]))
        u = np.concatenate([u, extra], axis=2)


def _interval_collision(initial: np.ndarray, times: np.ndarray,
                        a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Measure of ACTIVE time inside [a, b] for every (frame, band) path."""
    f, m, k = times.shape
    edges = np.concatenate([np.zeros((f, m, 1)), times], axis=2)
    overlap = np.clip(np.minimum(edges[..., 1:], b[..., None])
                      - np.maximum(edges[..., :-1], a[..., None]), 0.0, None)
    active = (initial[..., None] ^ (np.arange(k) & 1)) == ACTIVE
    return np.where(active, overlap, 0.0).sum(axis=2)


def time_hopping_offsets(theta: float, phase: int, params: TrafficParams,
                         rng: np.random.Generator) -> IntervalSet:
    """Contiguous interval of measure theta*T_f placed uniformly in the phase."""
    limit = params.phase_length(phase)
    if theta < 0 or theta > limit + 1e-12:
        raise ValueError(f"theta={theta} outside [0, {limit}] for phase {phase}")
    theta = min(theta, limit)
    if theta == 0.0:
        return IntervalSet()
    tf = params.frame_duration
    base = 0.0 if phase == 1 else params.phase_split * tf
    start = base + rng.random() * (limit - theta) * tf
    return IntervalSet(((start, start + theta * tf),))


def _hopping_alloc(policy: Policy, nsi: dualopt.NsiBatch,
                   cfg: ScenarioConfig) -> BatchAllocation:
    """Fixed-theta allocation: ratios from the calibrated prices, no sensing."""
    nu = policy.dual
    band_map = cfg.make_band_map()
    th = policy.theta
    r1 = ratio_phase1(nu, nsi.g_sr, nsi.g_sd)
    rs2, rr = ratio_phase2(nu, nsi.g_sd, nsi.g_rd)
    shape_m = (nsi.g_sd.shape[0], band_map.n_bands)
    th1 = np.full(shape_m, min(th, cfg.alpha))
    th2 = np.full(shape_m, min(th, 1.0 - cfg.alpha))
    band_of = band_map.band_of
    return BatchAllocation(ratio_s1=r1, ratio_s2=rs2, ratio_r=rr,
                           theta1=th1, theta2=th2,
                           p_s1=r1 * th1[:, band_of],
                           p_s2=rs2 * th2[:, band_of],
                           p_r=rr * th2[:, band_of])


def _policy_alloc(policy: Policy, nsi: dualopt.NsiBatch,
                  cfg: ScenarioConfig) -> tuple:
    """Allocation batch plus the NSI actually used for rate accounting."""
    if policy.variant == "relay-free":
        nsi = dualopt.NsiBatch(g_sr=np.zeros_like(nsi.g_sr),
                               g_rd=np.zeros_like(nsi.g_rd),
                               g_sd=nsi.g_sd, x=nsi.x, y=nsi.y)
    if policy.variant == "time-hopping":
        alloc = _hopping_alloc(policy, nsi, cfg)
    else:
        alloc = solve_batch(policy.dual, nsi.g_sr, nsi.g_rd, nsi.g_sd,
                            nsi.x, nsi.y, cfg.make_band_map(),
                            cfg.traffic_params())
    return alloc, nsi


def run_frame(policy: Policy, nsi: channel.NetworkStateInfo, paths,
              cfg: ScenarioConfig, hop_rng=None) -> FrameResult:
    """Replay one frame against its sampled traffic paths (scalar reference).

    ``paths`` is a sequence of per-band :class:`Trajectory` covering the
    frame; sensing outcomes inside ``nsi`` must equal the path states at the
    phase boundaries. Time-hopping placement draws from ``hop_rng``.
    """
    params = cfg.traffic_params()
    tf = params.frame_duration
    m_bands = cfg.n_bands
    if len(paths) != m_bands:
        raise ValueError("need one traffic path per band")
    batch_nsi = dualopt.NsiBatch(
        g_sr=nsi.g_sr[None, :], g_rd=nsi.g_rd[None, :], g_sd=nsi.g_sd[None, :],
        x=np.asarray(nsi.x)[None, :], y=np.asarray(nsi.y)[None, :])
    alloc, used_nsi = _policy_alloc(policy, batch_nsi, cfg)
    r1, r2, _, p_s, p_r = dualopt.per_sample_terms(alloc, used_nsi, cfg)

    if policy.variant == "time-hopping":
        iv1 = time_hopping_offsets(float(alloc.theta1[0, 0]), 1, params, hop_rng)
        iv2 = time_hopping_offsets(float(alloc.theta2[0, 0]), 2, params, hop_rng)
        ivs1 = [iv1] * m_bands
        ivs2 = [iv2] * m_bands
    else:
        from .allocator import access_intervals
        ivs1 = [access_intervals(float(alloc.theta1[0, m]), 1, int(nsi.x[m]),
                                 params) for m in range(m_bands)]
        ivs2 = [access_intervals(float(alloc.theta2[0, m]), 2, int(nsi.y[m]),
                                 params) for m in range(m_bands)]
    collision = sum(
        collision_time(paths[m], ivs1[m]) + collision_time(paths[m], ivs2[m])
        for m in range(m_bands))
    return FrameResult(collision=float(collision), rate1_term=float(r1[0]),
                       rate2_term=float(r2[0]), source_energy=float(p_s[0]),
                       relay_energy=float(p_r[0]), x=np.asarray(nsi.x),
                       y=np.asarray(nsi.y), theta1=alloc.theta1[0],
                       theta2=alloc.theta2[0])


def run_policy(policy: Policy, cfg: ScenarioConfig, n_frames: int,
               seed: int | None = None, frames_csv=None) -> RunSummary:
    """Monte-Carlo replay over ``n_frames`` frames (vectorized, seeded)."""
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    if seed is None:
        seed = cfg.seed
    params = cfg.traffic_params()
    tf = params.frame_duration
    alpha = params.phase_split

    gains_rng = substream(seed, "channel")
    traffic_rng = substream(seed, "traffic")
    hop_rng = substream(seed, "hopping")

    g_sr, g_rd, g_sd = channel.sample_gains_batch(cfg.channel_params(),
                                                  n_frames, gains_rng)
    paths = sample_paths_batch(params, n_frames, cfg.n_bands, traffic_rng)
    x = paths.initial
    y = paths.sensing(alpha * tf)
    nsi = dualopt.NsiBatch(g_sr=g_sr, g_rd=g_rd, g_sd=g_sd, x=x, y=y)
    alloc, used_nsi = _policy_alloc(policy, nsi, cfg)
    r1, r2, _, p_s, p_r = dualopt.per_sample_terms(alloc, used_nsi, cfg)

    # interval endpoints per (frame, band), phase 1 then phase 2
    if policy.variant == "time-hopping":
        off1 = hop_rng.random(n_frames)
        off2 = hop_rng.random(n_frames)
        th1 = alloc.theta1[:, 0]
        th2 = alloc.theta2[:, 0]
        ones_m = np.zeros((1, cfg.n_bands))
        a1 = (off1 * (alpha - th1) * tf)[:, None] + ones_m
        b1 = a1 + (th1 * tf)[:, None]
        a2 = (alpha * tf + off2 * (1.0 - alpha - th2) * tf)[:, None] + ones_m
        b2 = a2 + (th2 * tf)[:, None]
    else:
        a1 = np.where(x == IDLE, 0.0, (alpha - alloc.theta1) * tf)
        b1 = np.where(x == IDLE, alloc.theta1 * tf, alpha * tf)
        a2 = np.where(y == IDLE, alpha * tf, (1.0 - alloc.theta2) * tf)
        b2 = np.where(y == IDLE, (alpha + alloc.theta2) * tf, tf)

    collision = np.empty(n_frames)
    coll_band = np.empty((n_frames, cfg.n_bands)) if frames_csv else None
    for lo in range(0, n_frames, _CHUNK):
        hi = min(lo + _CHUNK, n_frames)
        sl = slice(lo, hi)
        per_band = (_interval_collision(paths.initial[sl], paths.times[sl],
                                        a1[sl], b1[sl])
                    + _interval_collision(paths.initial[sl], paths.times[sl],
                                          a2[sl], b2[sl]))
        collision[sl] = per_band.sum(axis=1)
        if coll_band is not None:
            coll_band[sl] = per_band

    if frames_csv:
        _write_frames_csv(frames_csv, cfg, policy, nsi, alloc, coll_band,
                          r1, r2, p_s, p_r)

    sem = lambda arr: float(arr.std(ddof=1) / np.sqrt(len(arr))) \
        if len(arr) > 1 else 0.0
    r1_mean, r2_mean = float(r1.mean()), float(r2.mean())
    if r1_mean <= r2_mean:
        ach, ach_se = r1_mean, sem(r1)
    else:
        ach, ach_se = r2_mean, sem(r2)
    return RunSummary(
        n_frames=n_frames,
        collision_per_second=float(collision.mean()) / tf,
        collision_se=sem(collision) / tf,
        rate1_mean=r1_mean, rate2_mean=r2_mean,
        achieved_rate=ach, achieved_rate_se=ach_se,
        mean_source_power=float(p_s.mean()),
        mean_relay_power=float(p_r.mean()))


def _write_frames_csv(path, cfg, policy, nsi, alloc, coll_band, r1, r2,
                      p_s, p_r):
    with open(path, "w", newline="") as fh:
        fh.write(f"# scenario_hash={cfg.scenario_hash()} "
                 f"policy={policy.variant}\n")
        fh.write("frame,band,x,y,theta1,theta2,collision,"
                 "r1_term,r2_term,e_s,e_r\n")
        n_frames, m_bands = coll_band.shape
        for f in range(n_frames):
            for m in range(m_bands):
                fh.write(",".join([
                    str(f), str(m), str(int(nsi.x[f, m])),
                    str(int(nsi.y[f, m])),
                    repr(float(alloc.theta1[f, m])),
                    repr(float(alloc.theta2[f, m])),
                    repr(float(coll_band[f, m])),
                    repr(float(r1[f])), repr(float(r2[f])),
                    repr(float(p_s[f])), repr(float(p_r[f]))]) + "\n")


@dataclass(frozen=True)
class CalibrationResult:
    feasible: bool
    policy: Policy | None
    detail: str = ""


def calibrate_baseline(variant: str, target_rate: float,
                       cfg: ScenarioConfig) -> CalibrationResult:
    """Tune a baseline policy to achieve ``target_rate`` under the budgets.

    Relay-free: optimize the prices with the relay links disabled.
    Time-hopping: bisect the smallest fixed time fraction whose optimal
    power allocation (prices from the fixed-theta dual problem) meets the
    target, to 1% relative accuracy.
    """
    cfg_t = cfg.replace(r_min=float(target_rate))
    chash = cfg.scenario_hash()
    if variant == "proposed":
        res = dualopt.optimize_dual(cfg_t)
        pol = Policy("proposed", chash, dual=res.nu)
        return CalibrationResult(res.converged, pol if res.converged else pol,
                                 detail="dual optimization")
    if variant == "relay-free":
        res = dualopt.optimize_dual(cfg_t, relay_free=True)
        pol = Policy("relay-free", chash, dual=res.nu)
        return CalibrationResult(res.converged, pol,
                                 detail="relay-disabled dual optimization")
    if variant != "time-hopping":
        raise ValueError(f"unknown policy family: {variant!r}")

    idle_dual = DualPoint(0.0, 0.0, 1.0 / cfg.p_s_max, 1.0 / cfg.p_r_max)
    if target_rate <= 0:
        return CalibrationResult(True, Policy("time-hopping", chash,
                                              dual=idle_dual, theta=0.0))
    theta_hi = min(cfg.alpha, 1.0 - cfg.alpha)
    res_hi = dualopt.optimize_dual(cfg_t, fixed_theta=theta_hi)
    if not res_hi.converged:
        return CalibrationResult(False, None,
                                 detail="target rate unreachable even at the "
                                        "full hopping fraction")
    lo, hi = 0.0, theta_hi
    best = res_hi.nu
    while hi - lo > 0.01 * theta_hi:
        mid = 0.5 * (lo + hi)
        res = dualopt.optimize_dual(cfg_t, fixed_theta=mid)
        if res.converged:
            hi, best = mid, res.nu
        else:
            lo = mid
    return CalibrationResult(True, Policy("time-hopping", chash, dual=best,
                                          theta=hi))
