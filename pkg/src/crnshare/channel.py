"""Per-frame network state information (NSI) generation.

Block-fading normalized power gains for the source-relay, relay-destination
and source-destination links over N sub-channels. Nodes sit on a line, the
relay at ``relay_position`` of the S-D distance; each link combines a path
loss component with i.i.d. unit-mean exponential (Rayleigh power) fading.
Gains are normalized by the interference-plus-noise power, so the ad-hoc
interference to the relay/destination is folded into the normalization.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ChannelParams",
    "NetworkStateInfo",
    "calibrate_mean_snr",
    "sample_gains",
    "sample_gains_batch",
    "nsi_trace_to_csv",
    "nsi_trace_from_csv",
]


@dataclass(frozen=True)
class ChannelParams:
    path_loss_exponent: float
    relay_position: float
    mean_sd_gain: float
    n_subchannels: int

    def __post_init__(self):
        if not self.path_loss_exponent > 0:
            raise ValueError("path_loss_exponent must be > 0")
        if not 0.0 < self.relay_position < 1.0:
            raise ValueError("relay_position must be in (0, 1)")
        if not self.mean_sd_gain > 0:
            raise ValueError("mean_sd_gain must be > 0")
        if self.n_subchannels < 1:
            raise ValueError("n_subchannels must be >= 1")

    @property
    def mean_sr_gain(self) -> float:
        return self.mean_sd_gain * self.relay_position ** (-self.path_loss_exponent)

    @property
    def mean_rd_gain(self) -> float:
        return self.mean_sd_gain * (1.0 - self.relay_position) ** (-self.path_loss_exponent)


@dataclass(frozen=True)
class NetworkStateInfo:
    """One frame's channel gains plus per-band sensing outcomes."""

    g_sr: np.ndarray
    g_rd: np.ndarray
    g_sd: np.ndarray
    x: np.ndarray  # phase-1 sensing outcome per band
    y: np.ndarray  # phase-2 sensing outcome per band

    def __post_init__(self):
        n = len(self.g_sd)
        if len(self.g_sr) != n or len(self.g_rd) != n:
            raise ValueError("gain arrays must share length N")
        if len(self.x) != len(self.y):
            raise ValueError("sensing arrays must share length M")
        if np.any(self.g_sr < 0) or np.any(self.g_rd < 0) or np.any(self.g_sd < 0):
            raise ValueError("gains must be nonnegative")


def calibrate_mean_snr(p_s_max: float, n_subchannels: int, target_db: float) -> float:
    """Mean S-D gain such that p_s_max * E[g_sd] / N hits target_db."""
    if not p_s_max > 0:
        raise ValueError("p_s_max must be > 0")
    if n_subchannels < 1:
        raise ValueError("n_subchannels must be >= 1")
    return n_subchannels * 10.0 ** (target_db / 10.0) / p_s_max


def sample_gains_batch(params: ChannelParams, n_samples: int,
                       rng: np.random.Generator):
    """Draw (n_samples, N) gain arrays (g_sr, g_rd, g_sd), i.i.d. Exp fading."""
    shape = (n_samples, params.n_subchannels)
    fading = rng.exponential(1.0, size=(3,) + shape)
    g_sr = params.mean_sr_gain * fading[0]
    g_rd = params.mean_rd_gain * fading[1]
    g_sd = params.mean_sd_gain * fading[2]
    return g_sr, g_rd, g_sd


def sample_gains(params: ChannelParams, rng: np.random.Generator):
    """Draw one frame's (g_sr, g_rd, g_sd) arrays of length N."""
    g_sr, g_rd, g_sd = sample_gains_batch(params, 1, rng)
    return g_sr[0], g_rd[0], g_sd[0]


def nsi_trace_to_csv(path, g_sr: np.ndarray, g_rd: np.ndarray, g_sd: np.ndarray):
    """Write a (frames, N) gain trace as CSV rows (frame, n, g_sr, g_rd, g_sd)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["frame", "n", "g_sr", "g_rd", "g_sd"])
        for f in range(g_sd.shape[0]):
            for n in range(g_sd.shape[1]):
                writer.writerow([f, n, repr(float(g_sr[f, n])),
                                 repr(float(g_rd[f, n])), repr(float(g_sd[f, n]))])


def nsi_trace_from_csv(path):
    """Read a gain trace written by :func:`nsi_trace_to_csv`."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            rows.append((int(row["frame"]), int(row["n"]), float(row["g_sr"]),
                         float(row["g_rd"]), float(row["g_sd"])))
    if not rows:
        raise ValueError("empty NSI trace")
    n_frames = max(r[0] for r in rows) + 1
    n_sub = max(r[1] for r in rows) + 1
    g_sr = np.zeros((n_frames, n_sub))
    g_rd = np.zeros((n_frames, n_sub))
    g_sd = np.zeros((n_frames, n_sub))
    for f, n, a, b, c in rows:
        g_sr[f, n], g_rd[f, n], g_sd[f, n] = a, b, c
    return g_sr, g_rd, g_sd
