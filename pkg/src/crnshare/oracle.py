"""Independent brute-force references used by tests and ``crnshare validate``.

Nothing here shares code with the closed forms it checks: collision
integrals are done by adaptive quadrature of the transition law, tiny
instances of the convex program are solved by coordinate-wise bounded
minimization (Lagrangian) or an NLP solver (primal), and interval
placements are enumerated on an offset grid. These paths are orders of
magnitude slower than the closed forms and exist only for validation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .allocator import DualPoint
from .traffic import ACTIVE, IDLE, TrafficParams, phi_collision, transition_prob

__all__ = [
    "ToyInstance",
    "OptimalPoint",
    "quad_phi",
    "lagrangian_value",
    "grid_search",
    "placement_enumerate",
]


@dataclass(frozen=True)
class ToyInstance:
    """Deterministic single-band instance small enough for exhaustive search."""

    g_sr: np.ndarray
    g_rd: np.ndarray
    g_sd: np.ndarray
    x: int
    y: int
    params: TrafficParams
    p_s_max: float = 1.0
    p_r_max: float = 1.0
    r_min: float = 0.0
    bandwidth: float = 1.0

    def __post_init__(self):
        for name in ("g_sr", "g_rd", "g_sd"):
            object.__setattr__(self, name,
                               np.atleast_1d(np.asarray(getattr(self, name),
                                                        dtype=float)))
        if not len(self.g_sd) == len(self.g_sr) == len(self.g_rd):
            raise ValueError("gain arrays must share length")
        if len(self.g_sd) > 2:
            raise ValueError("toy instances are limited to N <= 2")

    @property
    def n_sub(self) -> int:
        return len(self.g_sd)


@dataclass(frozen=True)
class OptimalPoint:
    p_s1: np.ndarray
    p_s2: np.ndarray
    p_r: np.ndarray
    theta1: float
    theta2: float
    value: float
    feasible: bool = True


def quad_phi(params: TrafficParams, phase: int, sensed: int,
             theta: float) -> float:
    """Adaptive quadrature of the transition law over the flush placement."""
    limit = params.phase_length(phase)
    if theta < 0 or theta > limit + 1e-12:
        raise ValueError(f"theta must lie in [0, {limit}] for phase {phase}")
    if theta == 0.0:
        return 0.0
    tf = params.frame_duration
    sense_time = 0.0 if phase == 1 else params.phase_split * tf
    phase_start = sense_time
    phase_end = sense_time + limit * tf
    if sensed == IDLE:
        lo, hi = phase_start, phase_start + theta * tf
    elif sensed == ACTIVE:
        lo, hi = phase_end - theta * tf, phase_end
    else:
        raise ValueError("sensed must be 0 or 1")
    val, err = integrate.quad(
        lambda t: transition_prob(params, sensed, ACTIVE, t - sense_time),
        lo, hi, epsabs=1e-12, epsrel=1e-12, limit=200)
    return val


def _rate_term(theta: float, power: float, gain: float) -> float:
    """theta * log2(1 + power*gain/theta), continuously extended at theta=0."""
    if theta <= 0.0 or power * gain <= 0.0:
        return 0.0
    return theta * np.log1p(power * gain / theta) / np.log(2.0)


def instance_rates(inst: ToyInstance, p_s1, p_s2, p_r, th1, th2):
    """Per-realization rate sums (bit/s) of a toy allocation."""
    w = inst.bandwidth
    r1 = w * sum(_rate_term(th2, p_s2[n], inst.g_sd[n])
                 + _rate_term(th1, p_s1[n], max(inst.g_sr[n], inst.g_sd[n]))
                 for n in range(inst.n_sub))
    # MAC term: split the combined received power over the shared fraction
    r2 = 0.0
    for n in range(inst.n_sub):
        mac = p_s2[n] * inst.g_sd[n] + p_r[n] * inst.g_rd[n]
        r2 += _rate_term(th1, p_s1[n], inst.g_sd[n])
        if th2 > 0 and mac > 0:
            r2 += th2 * np.log1p(mac / th2) / np.log(2.0)
    return r1, w * r2


def instance_collision(inst: ToyInstance, th1: float, th2: float) -> float:
    p = inst.params
    return (phi_collision(p, 1, inst.x, th1)
            + phi_collision(p, 2, inst.y, th2))


def lagrangian_value(inst: ToyInstance, nu: DualPoint, p_s1, p_s2, p_r,
                     th1: float, th2: float) -> float:
    """Per-realization Lagrangian of the convex program at a dual point."""
    r1, r2 = instance_rates(inst, p_s1, p_s2, p_r, th1, th2)
    w = inst.bandwidth
    return (instance_collision(inst, th1, th2) / inst.params.frame_duration
            + nu.rate1_price * (inst.r_min - r1) / w
            + nu.rate2_price * (inst.r_min - r2) / w
            + nu.source_power_price * (sum(p_s1) + sum(p_s2) - inst.p_s_max)
            + nu.relay_power_price * (sum(p_r) - inst.p_r_max))


def _coordinate_minimize(fun, x0, bounds, cycles=200, tol=1e-11):
    """Cyclic bounded 1-D minimization; adequate for smooth convex objectives."""
    x = np.array(x0, dtype=float)
    val = fun(x)
    for _ in range(cycles):
        prev = val
        for i in range(len(x)):
            lo, hi = bounds[i]

            def along(v, i=i):
                trial = x.copy()
                trial[i] = v
                return fun(trial)

            res = optimize.minimize_scalar(along, bounds=(lo, hi),
                                           method="bounded",
                                           options={"xatol": 1e-12})
            if res.fun < val:
                x[i] = res.x
                val = res.fun
        if prev - val < tol:
            break
    return x, val


def _unpack(inst: ToyInstance, vec):
    n = inst.n_sub
    return vec[:n], vec[n:2 * n], vec[2 * n:3 * n], vec[3 * n], vec[3 * n + 1]


def grid_search(inst: ToyInstance, nu: DualPoint | None = None,
                grid: int | None = None) -> OptimalPoint:
    """Brute-force optimum of a toy instance.

    With a dual point: minimize the per-realization Lagrangian by a coarse
    grid start plus coordinate-wise bounded polish. Without one: solve the
    deterministic primal (min collision s.t. rate/power constraints) by a
    multi-start NLP solve, reporting infeasibility when the rate target is
    out of reach.
    """
    n = inst.n_sub
    alpha = inst.params.phase_split
    if nu is not None:
        if grid is None:
            grid = 7 if n == 1 else 3  # keep the coarse stage tractable
        p_box = 2.0 * (nu.rate1_price + nu.rate2_price) \
            / (max(nu.source_power_price, 1e-12) * np.log(2.0)) + 1.0
        bounds = [(0.0, p_box)] * (3 * n) + [(0.0, alpha), (0.0, 1.0 - alpha)]
        fun = lambda v: lagrangian_value(inst, nu, *_unpack(inst, v))
        best_val = np.inf
        best_x0 = None
        axes = [np.linspace(lo, hi, grid) for lo, hi in bounds]
        for combo in np.stack(np.meshgrid(*axes), axis=-1).reshape(-1, 3 * n + 2):
            val = fun(combo)
            if val < best_val:
                best_val, best_x0 = val, combo
        # joint simplex descent escapes coordinate-wise stationary points
        # (powers and time fractions couple through the rate terms), then a
        # cyclic 1-D polish tightens each coordinate
        rng = np.random.default_rng(1)
        starts = [best_x0,
                  np.array([b[1] / 4 for b in bounds[:3 * n]]
                           + [alpha / 2, (1 - alpha) / 2])]
        starts += [np.array([rng.uniform(lo, hi / 2) for lo, hi in bounds])
                   for _ in range(4)]
        best_x, best_v = best_x0, best_val
        for x0 in starts:
            res = optimize.minimize(fun, x0, method="Nelder-Mead",
                                    bounds=bounds,
                                    options={"xatol": 1e-10, "fatol": 1e-12,
                                             "maxiter": 20000,
                                             "maxfev": 20000,
                                             "adaptive": True})
            if res.fun < best_v:
                best_x, best_v = res.x, res.fun
        x, val = _coordinate_minimize(fun, best_x, bounds)
        p1, p2, pr, t1, t2 = _unpack(inst, x)
        return OptimalPoint(np.array(p1), np.array(p2), np.array(pr),
                            float(t1), float(t2), float(val))

    # deterministic primal
    obj = lambda v: instance_collision(inst, v[3 * n], v[3 * n + 1]) \
        / inst.params.frame_duration
    p_box = max(inst.p_s_max, inst.p_r_max) * 2.0
    bounds = [(0.0, p_box)] * (3 * n) + [(0.0, alpha), (0.0, 1.0 - alpha)]

    def cons_rates(v):
        r1, r2 = instance_rates(inst, *_unpack(inst, v)[:3], v[3 * n],
                                v[3 * n + 1])
        return np.array([r1 - inst.r_min, r2 - inst.r_min])

    constraints = [
        {"type": "ineq", "fun": cons_rates},
        {"type": "ineq",
         "fun": lambda v: inst.p_s_max - np.sum(v[:2 * n])},
        {"type": "ineq",
         "fun": lambda v: inst.p_r_max - np.sum(v[2 * n:3 * n])},
    ]
    best = None
    rng = np.random.default_rng(0)
    starts = [np.concatenate([np.full(3 * n, inst.p_s_max / (2 * n)),
                              [alpha / 2, (1 - alpha) / 2]])]
    starts += [np.concatenate([rng.uniform(0, inst.p_s_max / n, 3 * n),
                               [rng.uniform(0, alpha),
                                rng.uniform(0, 1 - alpha)]])
               for _ in range(8)]
    for x0 in starts:
        res = optimize.minimize(obj, x0, method="SLSQP", bounds=bounds,
                                constraints=constraints,
                                options={"maxiter": 400, "ftol": 1e-12})
        feas = np.all(cons_rates(res.x) > -1e-6 * max(inst.r_min, 1.0)) \
            and np.sum(res.x[:2 * n]) <= inst.p_s_max + 1e-9 \
            and np.sum(res.x[2 * n:3 * n]) <= inst.p_r_max + 1e-9
        if feas and (best is None or res.fun < best[1]):
            best = (res.x, res.fun)
    if best is None:
        zero = np.zeros(n)
        return OptimalPoint(zero, zero.copy(), zero.copy(), 0.0, 0.0,
                            np.inf, feasible=False)
    x, val = best
    p1, p2, pr, t1, t2 = _unpack(inst, x)
    return OptimalPoint(np.array(p1), np.array(p2), np.array(pr), float(t1),
                        float(t2), float(val))


def placement_enumerate(params: TrafficParams, theta: float, phase: int,
                        sensed: int, n_offsets: int = 101):
    """Expected collision of every contiguous placement on an offset grid.

    Returns (offsets, values): offsets are fractions of the frame measured
    from the phase start; the flush placement corresponds to offset 0
    (sensed IDLE) or the largest offset (sensed ACTIVE).
    """
    limit = params.phase_length(phase)
    if theta < 0 or theta > limit + 1e-12:
        raise ValueError("theta outside the phase range")
    tf = params.frame_duration
    sense_time = 0.0 if phase == 1 else params.phase_split * tf
    offsets = np.linspace(0.0, limit - theta, n_offsets)
    values = np.empty(n_offsets)
    for i, off in enumerate(offsets):
        lo = sense_time + off * tf
        hi = lo + theta * tf
        values[i], _ = integrate.quad(
            lambda t: transition_prob(params, sensed, ACTIVE, t - sense_time),
            lo, hi, epsabs=1e-12, epsrel=1e-12, limit=200)
    return offsets, values
