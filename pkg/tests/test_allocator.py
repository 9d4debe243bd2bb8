import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize

from crnshare import oracle
from crnshare.allocator import (LN2, Allocation, BandMap, DualPoint,
                                InfeasibleDualError, access_intervals,
                                marginal_f, ratio_phase1, ratio_phase2,
                                solve_batch, solve_realization, theta_phase1,
                                theta_phase2)
from crnshare.allocator import _theta_from_fsum
from crnshare.channel import NetworkStateInfo
from crnshare.rngtools import substream
from crnshare.traffic import ACTIVE, IDLE, TrafficParams, phi_collision


def traffic(lam=1.0, mu=1.0, tf=1.0, alpha=0.5):
    return TrafficParams(rate_to_active=lam, rate_to_idle=mu,
                         frame_duration=tf, phase_split=alpha)


prices = st.floats(min_value=0.0, max_value=5.0)
pos_prices = st.floats(min_value=0.05, max_value=5.0)
gains = st.floats(min_value=0.01, max_value=60.0)


class TestDualPoint:
    def test_roundtrip(self):
        nu = DualPoint(1.0, 2.0, 3.0, 4.0)
        assert DualPoint.from_array(nu.as_array()) == nu

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            DualPoint(-1.0, 0.0, 1.0, 1.0)


class TestBandMap:
    def test_uniform(self):
        bm = BandMap.uniform(6, 3)
        assert bm.bands == ((0, 1), (2, 3), (4, 5))
        assert list(bm.band_of) == [0, 0, 1, 1, 2, 2]

    def test_non_divisible(self):
        with pytest.raises(ValueError):
            BandMap.uniform(5, 2)

    def test_irregular_partition(self):
        bm = BandMap(((0, 2), (1,), (3, 4, 5)))
        assert bm.n_bands == 3 and bm.n_subchannels == 6
        assert list(bm.band_of) == [0, 1, 0, 2, 2, 2]

    def test_rejects_non_partition(self):
        with pytest.raises(ValueError):
            BandMap(((0, 1), (1, 2)))


class TestMarginalF:
    def test_zero(self):
        assert marginal_f(0.0) == 0.0

    def test_unit_value(self):
        assert marginal_f(1.0) == pytest.approx(1.0 - 0.5 / LN2, abs=1e-12)

    def test_increasing_nonnegative(self):
        x = np.linspace(0.0, 50.0, 1000)
        f = marginal_f(x)
        assert np.all(f >= 0)
        assert np.all(np.diff(f) > 0)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            marginal_f(-0.5)


class TestRatioPhase1:
    def test_zero_prices(self):
        nu = DualPoint(0.0, 0.0, 1.0, 1.0)
        assert ratio_phase1(nu, 4.0, 1.0) == 0.0

    def test_below_threshold(self):
        # no positive root when zeta*G + sigma*g <= eps*ln2
        nu = DualPoint(0.1, 0.1, 10.0, 1.0)
        assert ratio_phase1(nu, 1.0, 1.0) == 0.0

    def test_unpriced_power_rejected(self):
        with pytest.raises(InfeasibleDualError):
            ratio_phase1(DualPoint(1.0, 0.0, 0.0, 1.0), 4.0, 1.0)

    def test_degenerate_direct_link(self):
        # g_sd = 0 collapses the quadratic to a single-link level
        nu = DualPoint(2.0, 1.0, 1.0, 1.0)
        expected = 2.0 / LN2 - 1.0 / 4.0
        assert ratio_phase1(nu, 4.0, 0.0) == pytest.approx(expected, abs=1e-12)

    def test_against_bisection(self):
        nu = DualPoint(2.0, 1.0, 1.0, 1.0)
        g_sr, g_sd = 4.0, 1.0
        lhs = lambda v: nu.rate1_price * g_sr / (1 + v * g_sr) \
            + nu.rate2_price * g_sd / (1 + v * g_sd) \
            - nu.source_power_price * LN2
        root = optimize.brentq(lhs, 1e-12, 1e6, xtol=1e-14)
        assert ratio_phase1(nu, g_sr, g_sd) == pytest.approx(root, abs=1e-10)

    @settings(max_examples=100, deadline=None)
    @given(z=prices, s=prices, e=pos_prices, g_sr=gains, g_sd=gains)
    def test_stationarity_residual(self, z, s, e, g_sr, g_sd):
        nu = DualPoint(z, s, e, 1.0)
        x = ratio_phase1(nu, g_sr, g_sd)
        assert x >= 0
        big = max(g_sr, g_sd)
        if x > 0:
            res = z * big / (1 + x * big) + s * g_sd / (1 + x * g_sd) - e * LN2
            assert abs(res) < 1e-8 * max(1.0, e)
        else:
            assert z * big + s * g_sd <= e * LN2 * (1 + 1e-12)


class TestRatioPhase2:
    def test_zero_prices(self):
        rs, rr = ratio_phase2(DualPoint(0.0, 0.0, 1.0, 1.0), 1.0, 4.0)
        assert rs == 0.0 and rr == 0.0

    def test_relay_silent_when_relay_expensive(self):
        nu = DualPoint(1.0, 1.0, 1.0, 1e6)
        rs, rr = ratio_phase2(nu, 1.0, 4.0)
        assert rr == 0.0
        assert rs == pytest.approx(2.0 / LN2 - 1.0, abs=1e-12)

    def test_relay_silent_when_no_relay_link(self):
        nu = DualPoint(1.0, 1.0, 1.0, 1.0)
        rs, rr = ratio_phase2(nu, 1.0, 0.0)
        assert rr == 0.0
        assert rs == pytest.approx(2.0 / LN2 - 1.0, abs=1e-12)

    def test_relay_active_stationarity(self):
        nu = DualPoint(1.0, 1.0, 1.0, 0.2)
        g_sd, g_rd = 1.0, 4.0
        rs, rr = ratio_phase2(nu, g_sd, g_rd)
        assert rr > 0
        mac = 1.0 + rs * g_sd + rr * g_rd
        res_r = nu.rate2_price * g_rd / mac - nu.relay_power_price * LN2
        res_s = nu.rate1_price * g_sd / (1 + rs * g_sd) \
            + nu.rate2_price * g_sd / mac - nu.source_power_price * LN2
        assert abs(res_r) < 1e-10
        assert abs(res_s) < 1e-10

    def test_matches_numeric_maximizer(self):
        # the ratios maximize the per-unit-time priced surplus
        nu = DualPoint(1.5, 0.8, 1.0, 0.3)
        g_sd, g_rd = 2.0, 5.0

        def neg_surplus(v):
            rs, rr = v
            return -(nu.rate1_price * np.log1p(g_sd * rs) / LN2
                     + nu.rate2_price * np.log1p(g_sd * rs + g_rd * rr) / LN2
                     - nu.source_power_price * rs - nu.relay_power_price * rr)

        res = optimize.minimize(neg_surplus, [0.5, 0.5], method="L-BFGS-B",
                                bounds=[(0, 50), (0, 50)],
                                options={"ftol": 1e-15, "gtol": 1e-12})
        rs, rr = ratio_phase2(nu, g_sd, g_rd)
        assert rs == pytest.approx(res.x[0], abs=1e-5)
        assert rr == pytest.approx(res.x[1], abs=1e-5)

    @settings(max_examples=100, deadline=None)
    @given(z=prices, s=prices, e=pos_prices, eta=prices, g_sd=gains,
           g_rd=gains)
    def test_branches_consistent(self, z, s, e, eta, g_sd, g_rd):
        nu = DualPoint(z, s, e, eta)
        rs, rr = ratio_phase2(nu, g_sd, g_rd)
        assert rs >= 0 and rr >= 0
        if rr == 0 and z + s > 0:
            expected = max((z + s) / (e * LN2) - 1.0 / g_sd, 0.0)
            assert rs == pytest.approx(expected, abs=1e-9)


class TestThetaFromFsum:
    def test_zero_fsum(self):
        p = traffic()
        assert _theta_from_fsum(0.0, p, IDLE, 0.5) == 0.0
        assert _theta_from_fsum(0.0, p, ACTIVE, 0.5) == 0.0

    def test_idle_log_form(self):
        # lam = mu = 1, Tf = 1: fsum 1/4 gives theta = ln(2)/2
        assert _theta_from_fsum(0.25, traffic(), IDLE, 0.5) \
            == pytest.approx(np.log(2.0) / 2.0, abs=1e-12)

    def test_saturation(self):
        p = traffic()
        assert _theta_from_fsum(10.0, p, IDLE, 0.5) == 0.5
        assert _theta_from_fsum(10.0, p, ACTIVE, 0.5) == 0.5

    def test_active_needs_higher_marginal(self):
        # after sensing ACTIVE the collision marginal at 0 is positive
        p = traffic()
        assert _theta_from_fsum(0.2, p, ACTIVE, 0.5) == 0.0
        assert _theta_from_fsum(0.2, p, IDLE, 0.5) > 0.0

    @settings(max_examples=60, deadline=None)
    @given(fsum=st.floats(0.0, 2.0),
           lam=st.floats(0.1, 4.0), mu=st.floats(0.1, 4.0),
           sensed=st.sampled_from([IDLE, ACTIVE]))
    def test_matches_numeric_argmin(self, fsum, lam, mu, sensed):
        # theta minimizes phi(theta)/Tf - fsum * theta over the phase
        p = traffic(lam, mu)
        obj = lambda th: phi_collision(p, 1, sensed, th) / p.frame_duration \
            - fsum * th
        grid = np.linspace(0.0, 0.5, 2001)
        numeric = grid[np.argmin(obj(grid))]
        closed = _theta_from_fsum(fsum, p, sensed, 0.5)
        assert closed == pytest.approx(numeric, abs=5e-4)


class TestThetaWrappers:
    def test_phase1_zero_prices(self):
        nu = DualPoint(0.0, 0.0, 1.0, 1.0)
        assert theta_phase1(nu, traffic(), [4.0], [1.0], IDLE) == 0.0

    def test_phase2_bounded(self):
        nu = DualPoint(3.0, 3.0, 0.5, 0.5)
        p = traffic(alpha=0.4)
        th = theta_phase2(nu, p, [2.0, 1.0], [5.0, 4.0], IDLE)
        assert 0.0 <= th <= 0.6

    def test_idle_dominates_active(self):
        nu = DualPoint(1.0, 1.0, 1.0, 1.0)
        p = traffic()
        g_sr, g_sd = [6.0, 3.0], [2.0, 1.0]
        assert theta_phase1(nu, p, g_sr, g_sd, IDLE) \
            >= theta_phase1(nu, p, g_sr, g_sd, ACTIVE)


class TestAccessIntervals:
    def test_empty(self):
        assert access_intervals(0.0, 1, IDLE, traffic()).measure == 0.0

    def test_phase1_idle_start_flush(self):
        iv = access_intervals(0.3, 1, IDLE, traffic())
        assert iv.intervals == ((0.0, 0.3),)

    def test_phase1_active_end_flush(self):
        iv = access_intervals(0.3, 1, ACTIVE, traffic())
        np.testing.assert_allclose(iv.intervals, [(0.2, 0.5)], atol=1e-15)

    def test_phase2_active_end_flush(self):
        iv = access_intervals(0.25, 2, ACTIVE, traffic())
        np.testing.assert_allclose(iv.intervals, [(0.75, 1.0)], atol=1e-15)

    def test_frame_duration_scaling(self):
        iv = access_intervals(0.2, 2, IDLE, traffic(tf=2.0))
        np.testing.assert_allclose(iv.intervals, [(1.0, 1.4)], atol=1e-15)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            access_intervals(0.6, 1, IDLE, traffic())


def random_nsi(rng, n_sub, n_bands):
    return NetworkStateInfo(
        g_sr=rng.exponential(8.0, n_sub), g_rd=rng.exponential(8.0, n_sub),
        g_sd=rng.exponential(2.0, n_sub),
        x=rng.integers(0, 2, n_bands), y=rng.integers(0, 2, n_bands))


class TestSolve:
    def test_power_time_consistency(self):
        rng = substream(21, "alloc")
        nu = DualPoint(1.2, 0.7, 0.9, 0.4)
        p = traffic(1.5, 0.7, 1.0, 0.4)
        bm = BandMap.uniform(6, 3)
        alloc = solve_realization(nu, random_nsi(rng, 6, 3), bm, p)
        th1 = alloc.theta1[bm.band_of]
        th2 = alloc.theta2[bm.band_of]
        assert np.allclose(alloc.p_s1, alloc.ratio_s1 * th1, atol=1e-15)
        assert np.allclose(alloc.p_s2, alloc.ratio_s2 * th2, atol=1e-15)
        assert np.allclose(alloc.p_r, alloc.ratio_r * th2, atol=1e-15)
        assert np.all(alloc.theta1 >= 0) and np.all(alloc.theta1 <= 0.4)
        assert np.all(alloc.theta2 >= 0) and np.all(alloc.theta2 <= 0.6)
        for m in range(3):
            assert alloc.intervals1[m].measure \
                == pytest.approx(alloc.theta1[m], abs=1e-12)
            assert alloc.intervals2[m].measure \
                == pytest.approx(alloc.theta2[m], abs=1e-12)

    def test_huge_power_prices_shut_down(self):
        nu = DualPoint(1.0, 1.0, 1e9, 1e9)
        alloc = solve_realization(nu, random_nsi(substream(22, "alloc"), 4, 2),
                                  BandMap.uniform(4, 2), traffic())
        assert np.all(alloc.p_s1 == 0) and np.all(alloc.p_s2 == 0)
        assert np.all(alloc.p_r == 0)
        assert np.all(alloc.theta1 == 0) and np.all(alloc.theta2 == 0)

    def test_batch_matches_scalar(self):
        rng = substream(23, "alloc")
        nu = DualPoint(0.9, 1.1, 0.8, 0.5)
        p = traffic(0.8, 1.6)
        bm = BandMap.uniform(4, 2)
        nsis = [random_nsi(rng, 4, 2) for _ in range(10)]
        batch = solve_batch(
            nu, np.stack([v.g_sr for v in nsis]),
            np.stack([v.g_rd for v in nsis]),
            np.stack([v.g_sd for v in nsis]),
            np.stack([v.x for v in nsis]), np.stack([v.y for v in nsis]),
            bm, p)
        for i, nsi in enumerate(nsis):
            single = solve_realization(nu, nsi, bm, p)
            assert np.array_equal(batch.theta1[i], single.theta1)
            assert np.array_equal(batch.theta2[i], single.theta2)
            assert np.array_equal(batch.p_s1[i], single.p_s1)
            assert np.array_equal(batch.p_r[i], single.p_r)

    def test_shape_validation(self):
        nu = DualPoint(1.0, 1.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            solve_batch(nu, np.ones((2, 4)), np.ones((2, 4)), np.ones((2, 4)),
                        np.zeros((2, 3)), np.zeros((2, 3)),
                        BandMap.uniform(4, 2), traffic())

    def test_local_optimality_against_perturbations(self):
        # the closed form must beat 10^4 random feasible candidates of the
        # per-realization Lagrangian on a single-band toy
        rng = substream(24, "alloc")
        p = traffic(1.2, 0.9, 1.0, 0.5)
        inst = oracle.ToyInstance(g_sr=[5.0], g_rd=[6.0], g_sd=[1.5],
                                  x=IDLE, y=ACTIVE, params=p)
        nu = DualPoint(1.3, 0.9, 1.0, 0.6)
        nsi = NetworkStateInfo(g_sr=inst.g_sr, g_rd=inst.g_rd, g_sd=inst.g_sd,
                               x=np.array([inst.x]), y=np.array([inst.y]))
        alloc = solve_realization(nu, nsi, BandMap(((0,),)), p)
        base = oracle.lagrangian_value(inst, nu, alloc.p_s1, alloc.p_s2,
                                       alloc.p_r, float(alloc.theta1[0]),
                                       float(alloc.theta2[0]))
        best = np.inf
        for _ in range(10000):
            cand = rng.uniform(0, 3, size=3)
            t1 = rng.uniform(0, 0.5)
            t2 = rng.uniform(0, 0.5)
            val = oracle.lagrangian_value(inst, nu, cand[:1], cand[1:2],
                                          cand[2:3], t1, t2)
            best = min(best, val)
        assert base <= best + 1e-9
