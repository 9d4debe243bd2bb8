"""Scenario configuration: canonical keys, YAML ingestion, scenario hash.

A scenario pins every experiment constant: network sizes, frame geometry,
traffic rates, channel geometry, budgets, rate target, Monte-Carlo sizes,
subgradient schedule and the master seed. Defaults mirror the baseline
experiment setup (16 sub-channels over 4 ad-hoc bands, midpoint relay,
path loss 4, 5 dB mean S-D SINR, unit normalized traffic rates).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

import yaml

from .allocator import BandMap
from .channel import ChannelParams, calibrate_mean_snr
from .traffic import TrafficParams

__all__ = ["ScenarioConfig", "ConfigError", "REQUIRED_KEYS"]


class ConfigError(ValueError):
    pass


# Keys a non-empty config file must spell out; the remaining keys fall back
# to defaults. An empty (or absent) file selects the built-in defaults.
REQUIRED_KEYS = (
    "n_subchannels", "n_bands", "bandwidth", "frame_duration", "alpha",
    "lambda_tf", "mu_tf", "path_loss_exponent", "relay_position",
    "sd_snr_db", "p_s_max", "p_r_max", "r_min",
)


@dataclass(frozen=True)
class ScenarioConfig:
    n_subchannels: int = 16
    n_bands: int = 4
    band_map: tuple | None = None      # None => uniform split
    bandwidth: float = 1.0             # per-subchannel bandwidth W
    frame_duration: float = 1.0
    alpha: float = 0.5
    lambda_tf: float = 1.0             # IDLE-exit rate times T_f
    mu_tf: float = 1.0                 # ACTIVE-exit rate times T_f
    path_loss_exponent: float = 4.0
    relay_position: float = 0.5
    sd_snr_db: float = 5.0
    p_s_max: float = 1.0
    p_r_max: float = 1.0
    r_min: float = 8.0
    r_min_sweep: tuple | None = (0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 24.0, 30.0)
    n_frames: int = 10000
    mc_samples: int = 10000
    step_a: float = 0.5
    step_b: float = 10.0
    max_iters: int = 2000
    stop_tol: float = 1e-2
    stop_patience: int = 20
    seed: int = 20260823
    # fixed NSI override for deterministic toy scenarios:
    # {"g_sr": [...], "g_rd": [...], "g_sd": [...], "x": [...], "y": [...]}
    deterministic: dict | None = None

    def __post_init__(self):
        if self.n_subchannels < 1 or self.n_bands < 1:
            raise ConfigError("n_subchannels and n_bands must be >= 1")
        if self.band_map is None and self.n_subchannels % self.n_bands:
            raise ConfigError("n_subchannels must be divisible by n_bands "
                              "under the uniform band map")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        for key in ("bandwidth", "frame_duration", "lambda_tf", "mu_tf",
                    "path_loss_exponent", "p_s_max", "p_r_max"):
            if not getattr(self, key) > 0:
                raise ConfigError(f"{key} must be positive")
        if not 0.0 < self.relay_position < 1.0:
            raise ConfigError("relay_position must lie in (0, 1)")
        if self.r_min < 0:
            raise ConfigError("r_min must be nonnegative")
        if self.band_map is not None:
            object.__setattr__(self, "band_map",
                               tuple(tuple(b) for b in self.band_map))
        if self.r_min_sweep is not None:
            object.__setattr__(self, "r_min_sweep",
                               tuple(float(v) for v in self.r_min_sweep))

    # -- derived model objects -------------------------------------------------

    def traffic_params(self) -> TrafficParams:
        tf = self.frame_duration
        return TrafficParams(rate_to_active=self.lambda_tf / tf,
                             rate_to_idle=self.mu_tf / tf,
                             frame_duration=tf, phase_split=self.alpha)

    def channel_params(self) -> ChannelParams:
        return ChannelParams(
            path_loss_exponent=self.path_loss_exponent,
            relay_position=self.relay_position,
            mean_sd_gain=calibrate_mean_snr(self.p_s_max, self.n_subchannels,
                                            self.sd_snr_db),
            n_subchannels=self.n_subchannels)

    def make_band_map(self) -> BandMap:
        if self.band_map is None:
            return BandMap.uniform(self.n_subchannels, self.n_bands)
        return BandMap(self.band_map)

    # -- serialization ---------------------------------------------------------

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, default=list)

    def scenario_hash(self) -> str:
        """Hash of the problem-defining fields (not seeds or MC sizes).

        Policies are bound to this hash: re-simulating with another seed or
        frame count is legitimate, changing the physical scenario is not.
        """
        physical = {key: getattr(self, key) for key in REQUIRED_KEYS}
        physical["band_map"] = self.band_map
        physical["deterministic"] = self.deterministic
        blob = json.dumps(physical, sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def replace(self, **kwargs) -> "ScenarioConfig":
        return dataclasses.replace(self, **kwargs)

    @classmethod
    def from_dict(cls, data: dict | None) -> "ScenarioConfig":
        if not data:
            return cls()
        known = {f.name for f in dataclasses.fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigError(f"unknown config key: {key!r}")
        for key in REQUIRED_KEYS:
            if key not in data:
                raise ConfigError(f"missing config key: {key!r}")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "ScenarioConfig":
        with open(path) as fh:
            data = yaml.safe_load(fh)
        if data is not None and not isinstance(data, dict):
            raise ConfigError("config file must contain a mapping")
        return cls.from_dict(data)

    def to_file(self, path):
        with open(path, "w") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=True,
                           default_flow_style=False)
