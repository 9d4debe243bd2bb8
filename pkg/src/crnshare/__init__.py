"""Spectrum-sharing optimizer and simulator for a DF relay network
coexisting with CTMC-modeled ad-hoc traffic."""

from .allocator import (Allocation, BandMap, DualPoint, InfeasibleDualError,
                        access_intervals, marginal_f, ratio_phase1,
                        ratio_phase2, solve_realization, theta_phase1,
                        theta_phase2)
from .channel import ChannelParams, NetworkStateInfo, calibrate_mean_snr, \
    sample_gains
from .config import ConfigError, ScenarioConfig
from .dualopt import DualResult, SubgradientSample, evaluate_rates, \
    mc_subgradient, optimize_dual
from .policy import Policy, load_policy_table, save_policy_table
from .simulator import CalibrationResult, FrameResult, RunSummary, \
    calibrate_baseline, run_frame, run_policy, time_hopping_offsets
from .traffic import (ACTIVE, IDLE, IntervalSet, TrafficParams, Trajectory,
                      collision_time, phi_collision, sample_trajectory,
                      stationary_dist, transition_prob)

__version__ = "0.1.0"
