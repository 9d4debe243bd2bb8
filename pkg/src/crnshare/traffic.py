"""Two-state CTMC ad-hoc traffic model.

The ad-hoc occupancy of one band is a binary continuous-time Markov chain:
IDLE (0) leaves for ACTIVE at rate ``rate_to_active`` and ACTIVE leaves for
IDLE at rate ``rate_to_idle``.  The module provides the transition law, the
stationary law, exact trajectory sampling, collision-time integration of a
sampled path against transmission intervals, and the closed-form expected
collision time of the start/end-flush interval placements conditioned on
the state sensed at the phase boundary (``phi_collision``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "IDLE",
    "ACTIVE",
    "TrafficParams",
    "IntervalSet",
    "Trajectory",
    "transition_prob",
    "stationary_dist",
    "phi_collision",
    "sample_trajectory",
    "collision_time",
]

IDLE = 0
ACTIVE = 1


@dataclass(frozen=True)
class TrafficParams:
    """CTMC rates plus the frame geometry of one ad-hoc band.

    rate_to_active: exit rate of the IDLE state (1/time).
    rate_to_idle: exit rate of the ACTIVE state (1/time).
    frame_duration: frame length T_f (time).
    phase_split: fraction of the frame taken by phase 1, in (0, 1).
    """

    rate_to_active: float
    rate_to_idle: float
    frame_duration: float = 1.0
    phase_split: float = 0.5

    def __post_init__(self):
        if not self.rate_to_active > 0:
            raise ValueError("rate_to_active must be > 0")
        if not self.rate_to_idle > 0:
            raise ValueError("rate_to_idle must be > 0")
        if not self.frame_duration > 0:
            raise ValueError("frame_duration must be > 0")
        if not 0.0 < self.phase_split < 1.0:
            raise ValueError("phase_split must be in (0, 1)")

    @property
    def rate_sum(self) -> float:
        return self.rate_to_active + self.rate_to_idle

    @property
    def stationary_active(self) -> float:
        return self.rate_to_active / self.rate_sum

    def phase_length(self, phase: int) -> float:
        """Length of the given phase as a fraction of the frame."""
        if phase == 1:
            return self.phase_split
        if phase == 2:
            return 1.0 - self.phase_split
        raise ValueError(f"phase must be 1 or 2, got {phase}")


@dataclass(frozen=True)
class IntervalSet:
    """Ordered union of disjoint closed intervals within one frame."""

    intervals: tuple = ()

    def __post_init__(self):
        iv = tuple((float(a), float(b)) for a, b in self.intervals)
        object.__setattr__(self, "intervals", iv)
        prev_end = -np.inf
        for a, b in iv:
            if b < a:
                raise ValueError(f"interval [{a}, {b}] has negative length")
            if a < prev_end:
                raise ValueError("intervals must be sorted and disjoint")
            prev_end = b

    @property
    def measure(self) -> float:
        return sum(b - a for a, b in self.intervals)

    def __bool__(self) -> bool:
        return bool(self.intervals)


@dataclass(frozen=True)
class Trajectory:
    """Right-continuous piecewise-constant CTMC path on [0, horizon].

    ``times`` are the transition instants in increasing order; the state on
    [times[k-1], times[k]) is ``initial`` flipped k-1 times.
    """

    initial: int
    times: np.ndarray = field(default_factory=lambda: np.empty(0))
    horizon: float = 0.0

    def state_at(self, t: float) -> int:
        if t < 0 or t > self.horizon:
            raise ValueError("t outside trajectory horizon")
        flips = int(np.searchsorted(self.times, t, side="right"))
        return self.initial ^ (flips & 1)

    def segments(self):
        """Yield (start, end, state) covering [0, horizon]."""
        edges = [0.0, *[t for t in self.times if t < self.horizon], self.horizon]
        state = self.initial
        for a, b in zip(edges[:-1], edges[1:]):
            yield a, b, state
            state ^= 1


def transition_prob(params: TrafficParams, from_state: int, to_state: int,
                    elapsed) -> float:
    """Transition probability of the two-state CTMC after ``elapsed`` time."""
    t = np.asarray(elapsed, dtype=float)
    if np.any(t < 0):
        raise ValueError("elapsed must be nonnegative")
    lam = params.rate_to_active
    mu = params.rate_to_idle
    decay = np.exp(-(lam + mu) * t)
    if from_state == IDLE:
        p_active = lam * (1.0 - decay) / (lam + mu)
    elif from_state == ACTIVE:
        p_active = (lam + mu * decay) / (lam + mu)
    else:
        raise ValueError("from_state must be 0 or 1")
    if to_state == ACTIVE:
        out = p_active
    elif to_state == IDLE:
        out = 1.0 - p_active
    else:
        raise ValueError("to_state must be 0 or 1")
    return out if out.ndim else float(out)


def stationary_dist(params: TrafficParams) -> tuple:
    """Stationary (idle, active) probabilities."""
    lam = params.rate_to_active
    mu = params.rate_to_idle
    return mu / (lam + mu), lam / (lam + mu)


def phi_collision(params: TrafficParams, phase: int, sensed: int, theta) -> float:
    """Expected collision time of the optimal interval placement.

    Given the state ``sensed`` at the start of ``phase`` and a transmission
    time fraction ``theta``, returns the conditional expected time (not a
    fraction) during which the band is ACTIVE inside the start-flush (sensed
    IDLE) or end-flush (sensed ACTIVE) interval of measure theta*T_f.
    """
    theta = np.asarray(theta, dtype=float)
    limit = params.phase_length(phase)
    if np.any(theta < 0) or np.any(theta > limit + 1e-12):
        raise ValueError(f"theta must lie in [0, {limit}] for phase {phase}")
    lam = params.rate_to_active
    mu = params.rate_to_idle
    tf = params.frame_duration
    rho = (lam + mu) * tf
    scale = lam * tf / (lam + mu)
    if sensed == IDLE:
        out = scale * (theta + np.expm1(-rho * theta) / rho)
    elif sensed == ACTIVE:
        # gap between the sensing instant and the start of the end-flush
        # interval shrinks as theta grows; at theta = phase length it is 0
        gap = limit
        out = scale * (theta + (mu / lam) * np.exp(-rho * gap)
                       * np.expm1(rho * theta) / rho)
    else:
        raise ValueError("sensed must be 0 or 1")
    return out if out.ndim else float(out)


def sample_trajectory(params: TrafficParams, initial: int, horizon: float,
                      rng: np.random.Generator) -> Trajectory:
    """Sample one CTMC path on [0, horizon] by alternating exponentials."""
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    if initial not in (IDLE, ACTIVE):
        raise ValueError("initial must be 0 or 1")
    rates = {IDLE: params.rate_to_active, ACTIVE: params.rate_to_idle}
    times = []
    t = 0.0
    state = initial
    while True:
        t += rng.exponential(1.0 / rates[state])
        if t >= horizon:
            break
        times.append(t)
        state ^= 1
    return Trajectory(initial=initial, times=np.asarray(times), horizon=horizon)


def collision_time(path: Trajectory, tx: IntervalSet) -> float:
    """Measure of {t in tx : path(t) = ACTIVE}; exact interval arithmetic."""
    if tx and tx.intervals[-1][1] > path.horizon + 1e-12:
        raise ValueError("transmission intervals exceed the path horizon")
    total = 0.0
    for seg_a, seg_b, state in path.segments():
        if state != ACTIVE:
            continue
        for a, b in tx.intervals:
            total += max(0.0, min(seg_b, b) - max(seg_a, a))
    return total
