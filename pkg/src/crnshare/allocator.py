"""Closed-form KKT primal solution for one NSI realization at a fixed dual point.

Given prices on the two rate constraints and the two expected-power budgets,
the per-subchannel power-to-time ratios follow from stationarity conditions
(a quadratic root in phase 1, a relay-active/relay-silent branch pair in
phase 2), after which the per-band time fractions have explicit log-form
solutions and the access intervals follow the sense-and-flush placement:
start-flush after sensing IDLE, end-flush after sensing ACTIVE.

All ratio/fraction formulas are written vectorized over a batch axis of NSI
realizations; ``solve_realization`` is the single-realization wrapper.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .traffic import ACTIVE, IDLE, IntervalSet, TrafficParams

__all__ = [
    "LN2",
    "DualPoint",
    "BandMap",
    "Allocation",
    "BatchAllocation",
    "InfeasibleDualError",
    "marginal_f",
    "ratio_phase1",
    "ratio_phase2",
    "theta_phase1",
    "theta_phase2",
    "access_intervals",
    "solve_batch",
    "solve_realization",
]

LN2 = float(np.log(2.0))


class InfeasibleDualError(ValueError):
    """Raised when a dual point prices power at zero while demanding rate."""


@dataclass(frozen=True)
class DualPoint:
    """Nonnegative prices: two rate constraints, source and relay power."""

    rate1_price: float  # multiplier of the broadcast-side rate constraint
    rate2_price: float  # multiplier of the MAC-side rate constraint
    source_power_price: float
    relay_power_price: float

    def __post_init__(self):
        for name in ("rate1_price", "rate2_price", "source_power_price",
                     "relay_power_price"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    def as_array(self) -> np.ndarray:
        return np.array([self.rate1_price, self.rate2_price,
                         self.source_power_price, self.relay_power_price])

    @classmethod
    def from_array(cls, arr) -> "DualPoint":
        return cls(float(arr[0]), float(arr[1]), float(arr[2]), float(arr[3]))


@dataclass(frozen=True)
class BandMap:
    """Partition of the N sub-channels into M ad-hoc bands."""

    bands: tuple  # tuple of tuples of sub-channel indices

    def __post_init__(self):
        bands = tuple(tuple(int(i) for i in b) for b in self.bands)
        object.__setattr__(self, "bands", bands)
        flat = sorted(i for b in bands for i in b)
        if flat != list(range(len(flat))):
            raise ValueError("bands must partition 0..N-1")

    @classmethod
    def uniform(cls, n_subchannels: int, n_bands: int) -> "BandMap":
        if n_subchannels % n_bands:
            raise ValueError("N must be divisible by M for a uniform band map")
        size = n_subchannels // n_bands
        return cls(tuple(tuple(range(m * size, (m + 1) * size))
                         for m in range(n_bands)))

    @property
    def n_bands(self) -> int:
        return len(self.bands)

    @property
    def n_subchannels(self) -> int:
        return sum(len(b) for b in self.bands)

    @property
    def band_of(self) -> np.ndarray:
        out = np.empty(self.n_subchannels, dtype=int)
        for m, b in enumerate(self.bands):
            out[list(b)] = m
        return out


@dataclass(frozen=True)
class Allocation:
    """Per-subchannel powers/ratios and per-band time fractions and intervals."""

    ratio_s1: np.ndarray
    ratio_s2: np.ndarray
    ratio_r: np.ndarray
    theta1: np.ndarray
    theta2: np.ndarray
    p_s1: np.ndarray
    p_s2: np.ndarray
    p_r: np.ndarray
    intervals1: tuple
    intervals2: tuple


@dataclass(frozen=True)
class BatchAllocation:
    """Vectorized allocation over a leading axis of NSI realizations."""

    ratio_s1: np.ndarray  # (S, N)
    ratio_s2: np.ndarray
    ratio_r: np.ndarray
    theta1: np.ndarray    # (S, M)
    theta2: np.ndarray
    p_s1: np.ndarray      # (S, N)
    p_s2: np.ndarray
    p_r: np.ndarray


def marginal_f(x):
    """log2(1+x) - x/((1+x)ln2): rate minus its first-order power credit."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("marginal_f requires x >= 0")
    out = np.log1p(x) / LN2 - x / ((1.0 + x) * LN2)
    out = np.maximum(out, 0.0)  # clip the ~1e-17 negatives from rounding
    return out if out.ndim else float(out)


def _check_power_priced(nu: DualPoint):
    if nu.rate1_price + nu.rate2_price > 0 and nu.source_power_price <= 0:
        raise InfeasibleDualError(
            "source power is unpriced while a rate constraint is active; "
            "the inner problem is unbounded")


def ratio_phase1(nu: DualPoint, g_sr, g_sd):
    """Phase-1 power-to-time ratio: the positive stationarity root, else 0.

    Solves zeta*G/(1+xG) + sigma*g/(1+xg) = eps*ln2 with G = max(g_sr, g_sd),
    g = g_sd, via the equivalent quadratic; a positive root exists iff
    zeta*G + sigma*g > eps*ln2, and then it is the larger quadratic root.
    """
    g_sr = np.asarray(g_sr, dtype=float)
    g_sd = np.asarray(g_sd, dtype=float)
    if np.any(g_sr < 0) or np.any(g_sd < 0):
        raise ValueError("gains must be nonnegative")
    zeta, sigma = nu.rate1_price, nu.rate2_price
    if zeta + sigma == 0:
        out = np.zeros(np.broadcast(g_sr, g_sd).shape)
        return out if out.ndim else 0.0
    _check_power_priced(nu)
    lhs0 = zeta * np.maximum(g_sr, g_sd) + sigma * g_sd
    big_g = np.maximum(g_sr, g_sd)
    g = g_sd
    level = nu.source_power_price * LN2
    a = level * big_g * g
    b = level * (big_g + g) - (zeta + sigma) * big_g * g
    c = level - zeta * big_g - sigma * g
    with np.errstate(divide="ignore", invalid="ignore"):
        disc = np.maximum(b * b - 4.0 * a * c, 0.0)
        x_quad = (-b + np.sqrt(disc)) / (2.0 * a)
        x_lin = np.where(b > 0, -c / np.where(b > 0, b, 1.0), 0.0)
    x = np.where(a > 0, x_quad, x_lin)
    x = np.where((lhs0 > level) & (x > 0), x, 0.0)
    return x if x.ndim else float(x)


def ratio_phase2(nu: DualPoint, g_sd, g_rd):
    """Phase-2 ratios (source, relay): relay-active branch with fallback.

    The relay-active branch requires relay power to be priced, a positive
    effective source price eps - eta*g_sd/g_rd, and a positive resulting
    relay ratio; otherwise the relay stays silent and the source ratio is
    the usual single-link water-filling level.
    """
    g_sd = np.asarray(g_sd, dtype=float)
    g_rd = np.asarray(g_rd, dtype=float)
    if np.any(g_sd < 0) or np.any(g_rd < 0):
        raise ValueError("gains must be nonnegative")
    zeta, sigma = nu.rate1_price, nu.rate2_price
    shape = np.broadcast(g_sd, g_rd).shape
    if zeta + sigma == 0:
        z = np.zeros(shape)
        return (z, z.copy()) if z.ndim else (0.0, 0.0)
    _check_power_priced(nu)
    eps, eta = nu.source_power_price, nu.relay_power_price

    g_sd_safe = np.where(g_sd > 0, g_sd, 1.0)
    g_rd_safe = np.where(g_rd > 0, g_rd, 1.0)
    relay_possible = (eta > 0) & (g_rd > 0)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        denom = eps - eta * g_sd / g_rd_safe
        branch_ok = relay_possible & (denom > 0) & (g_sd > 0)
        rs_active = np.where(
            branch_ok,
            np.maximum(zeta / (np.where(branch_ok, denom, 1.0) * LN2)
                       - 1.0 / g_sd_safe, 0.0),
            0.0)
        rr_active = np.where(
            relay_possible,
            sigma / (max(eta, np.finfo(float).tiny) * LN2) - 1.0 / g_rd_safe
            - rs_active * g_sd / g_rd_safe,
            -1.0)
        rs_silent = np.where(
            g_sd > 0,
            np.maximum((zeta + sigma) / (eps * LN2) - 1.0 / g_sd_safe, 0.0),
            0.0)
    use_relay = branch_ok & (rr_active > 0)
    rs = np.where(use_relay, rs_active, rs_silent)
    rr = np.where(use_relay, rr_active, 0.0)
    if rs.ndim:
        return rs, rr
    return float(rs), float(rr)


def _theta_from_fsum(fsum, params: TrafficParams, sensed, phase_length):
    """Log-form optimal time fraction given the per-band marginal-rate sum."""
    lam = params.rate_to_active
    mu = params.rate_to_idle
    rho = (lam + mu) * params.frame_duration
    fsum = np.asarray(fsum, dtype=float)
    sensed = np.asarray(sensed)
    with np.errstate(divide="ignore", invalid="ignore"):
        arg_idle = 1.0 - (lam + mu) / lam * fsum
        th_idle = np.where(arg_idle > 0,
                           -np.log(np.where(arg_idle > 0, arg_idle, 1.0)) / rho,
                           np.inf)
        arg_active = (lam + mu) / mu * fsum - lam / mu
        th_active = np.where(arg_active > 0,
                             phase_length
                             + np.log(np.where(arg_active > 0, arg_active, 1.0)) / rho,
                             -np.inf)
    th = np.where(sensed == IDLE, th_idle, th_active)
    th = np.clip(th, 0.0, phase_length)
    return th if th.ndim else float(th)


def theta_phase1(nu: DualPoint, params: TrafficParams, g_sr, g_sd, sensed):
    """Optimal phase-1 time fraction for one band (gains over its sub-channels)."""
    g_sr = np.atleast_1d(np.asarray(g_sr, dtype=float))
    g_sd = np.atleast_1d(np.asarray(g_sd, dtype=float))
    r1 = np.atleast_1d(ratio_phase1(nu, g_sr, g_sd))
    fsum = float(np.sum(nu.rate2_price * marginal_f(g_sd * r1)
                        + nu.rate1_price * marginal_f(np.maximum(g_sr, g_sd) * r1)))
    return _theta_from_fsum(fsum, params, sensed, params.phase_split)


def theta_phase2(nu: DualPoint, params: TrafficParams, g_sd, g_rd, sensed):
    """Optimal phase-2 time fraction for one band."""
    g_sd = np.atleast_1d(np.asarray(g_sd, dtype=float))
    g_rd = np.atleast_1d(np.asarray(g_rd, dtype=float))
    rs, rr = ratio_phase2(nu, g_sd, g_rd)
    rs = np.atleast_1d(rs)
    rr = np.atleast_1d(rr)
    fsum = float(np.sum(nu.rate1_price * marginal_f(g_sd * rs)
                        + nu.rate2_price * marginal_f(g_sd * rs + g_rd * rr)))
    return _theta_from_fsum(fsum, params, sensed, 1.0 - params.phase_split)


def access_intervals(theta: float, phase: int, sensed: int,
                     params: TrafficParams) -> IntervalSet:
    """Sense-and-flush placement: start-flush if IDLE, end-flush if ACTIVE."""
    limit = params.phase_length(phase)
    if theta < -1e-15 or theta > limit + 1e-12:
        raise ValueError(f"theta={theta} outside [0, {limit}] for phase {phase}")
    theta = min(max(theta, 0.0), limit)
    if theta == 0.0:
        return IntervalSet()
    tf = params.frame_duration
    alpha = params.phase_split
    if phase == 1:
        start, end = 0.0, alpha * tf
    else:
        start, end = alpha * tf, tf
    if sensed == IDLE:
        return IntervalSet(((start, start + theta * tf),))
    if sensed == ACTIVE:
        return IntervalSet(((end - theta * tf, end),))
    raise ValueError("sensed must be 0 or 1")


def solve_batch(nu: DualPoint, g_sr, g_rd, g_sd, x, y, band_map: BandMap,
                params: TrafficParams) -> BatchAllocation:
    """Closed-form primal solution for a batch of NSI realizations.

    Gains are (S, N); sensing outcomes are (S, M). Band reductions loop over
    the M bands in fixed order so results do not depend on BLAS threading.
    """
    g_sr = np.atleast_2d(np.asarray(g_sr, dtype=float))
    g_rd = np.atleast_2d(np.asarray(g_rd, dtype=float))
    g_sd = np.atleast_2d(np.asarray(g_sd, dtype=float))
    x = np.atleast_2d(np.asarray(x))
    y = np.atleast_2d(np.asarray(y))
    n_samples, n_sub = g_sd.shape
    if band_map.n_subchannels != n_sub:
        raise ValueError("band map size does not match the gain arrays")
    if x.shape != (n_samples, band_map.n_bands) or y.shape != x.shape:
        raise ValueError("sensing arrays must be (S, M)")

    r1 = ratio_phase1(nu, g_sr, g_sd)
    rs2, rr = ratio_phase2(nu, g_sd, g_rd)

    zeta, sigma = nu.rate1_price, nu.rate2_price
    fterm1 = sigma * marginal_f(g_sd * r1) \
        + zeta * marginal_f(np.maximum(g_sr, g_sd) * r1)
    fterm2 = zeta * marginal_f(g_sd * rs2) \
        + sigma * marginal_f(g_sd * rs2 + g_rd * rr)

    theta1 = np.empty((n_samples, band_map.n_bands))
    theta2 = np.empty((n_samples, band_map.n_bands))
    for m, idx in enumerate(band_map.bands):
        s1 = fterm1[:, list(idx)].sum(axis=1)
        s2 = fterm2[:, list(idx)].sum(axis=1)
        theta1[:, m] = _theta_from_fsum(s1, params, x[:, m], params.phase_split)
        theta2[:, m] = _theta_from_fsum(s2, params, y[:, m],
                                        1.0 - params.phase_split)

    band_of = band_map.band_of
    th1_sub = theta1[:, band_of]
    th2_sub = theta2[:, band_of]
    return BatchAllocation(
        ratio_s1=r1, ratio_s2=rs2, ratio_r=rr,
        theta1=theta1, theta2=theta2,
        p_s1=r1 * th1_sub, p_s2=rs2 * th2_sub, p_r=rr * th2_sub)


def solve_realization(nu: DualPoint, nsi, band_map: BandMap,
                      params: TrafficParams) -> Allocation:
    """Single-NSI wrapper around :func:`solve_batch`, with access intervals."""
    batch = solve_batch(nu, nsi.g_sr[None, :], nsi.g_rd[None, :],
                        nsi.g_sd[None, :], nsi.x[None, :], nsi.y[None, :],
                        band_map, params)
    theta1 = batch.theta1[0]
    theta2 = batch.theta2[0]
    intervals1 = tuple(access_intervals(theta1[m], 1, int(nsi.x[m]), params)
                       for m in range(band_map.n_bands))
    intervals2 = tuple(access_intervals(theta2[m], 2, int(nsi.y[m]), params)
                       for m in range(band_map.n_bands))
    return Allocation(
        ratio_s1=batch.ratio_s1[0], ratio_s2=batch.ratio_s2[0],
        ratio_r=batch.ratio_r[0], theta1=theta1, theta2=theta2,
        p_s1=batch.p_s1[0], p_s2=batch.p_s2[0], p_r=batch.p_r[0],
        intervals1=intervals1, intervals2=intervals2)
