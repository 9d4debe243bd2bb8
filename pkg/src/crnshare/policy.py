"""Transmission policies and their on-disk table format.

A policy is the small set of numbers the per-frame procedure needs: the
variant, the optimized constraint prices (proposed / relay-free) or the
fixed time fraction (time-hopping), bound to a scenario hash so a table
can only be replayed against the configuration it was optimized for.
"""

from __future__ import annotations

from dataclasses import dataclass

from .allocator import DualPoint

__all__ = ["Policy", "PolicyTableError", "save_policy_table",
           "load_policy_table", "VARIANTS"]

VARIANTS = ("proposed", "relay-free", "time-hopping")


class PolicyTableError(ValueError):
    pass


@dataclass(frozen=True)
class Policy:
    variant: str
    config_hash: str
    dual: DualPoint | None = None
    theta: float | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise PolicyTableError(f"unknown policy variant: {self.variant!r}")
        if self.variant in ("proposed", "relay-free") and self.dual is None:
            raise PolicyTableError(f"{self.variant} policy requires a dual point")
        if self.variant == "time-hopping":
            if self.theta is None or not 0.0 <= self.theta:
                raise PolicyTableError("time-hopping policy requires theta >= 0")
            if self.dual is None:
                raise PolicyTableError("time-hopping policy requires the "
                                       "power-allocation dual point")


def save_policy_table(policy: Policy, path):
    lines = [
        "# crnshare policy table",
        f"config_hash {policy.config_hash}",
        f"variant {policy.variant}",
    ]
    nu = policy.dual
    lines += [
        f"rate1_price {nu.rate1_price!r}",
        f"rate2_price {nu.rate2_price!r}",
        f"source_power_price {nu.source_power_price!r}",
        f"relay_power_price {nu.relay_power_price!r}",
    ]
    if policy.theta is not None:
        lines.append(f"theta {policy.theta!r}")
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def load_policy_table(path) -> Policy:
    fields = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                key, value = line.split(None, 1)
            except ValueError:
                raise PolicyTableError(f"malformed policy table line: {line!r}")
            fields[key] = value
    try:
        dual = DualPoint(
            rate1_price=float(fields["rate1_price"]),
            rate2_price=float(fields["rate2_price"]),
            source_power_price=float(fields["source_power_price"]),
            relay_power_price=float(fields["relay_power_price"]))
        return Policy(
            variant=fields["variant"],
            config_hash=fields["config_hash"],
            dual=dual,
            theta=float(fields["theta"]) if "theta" in fields else None)
    except KeyError as exc:
        raise PolicyTableError(f"policy table missing field {exc}")
