"""Named, counter-based random substreams.

All randomness in the toolkit flows from one master seed. Each consumer
(channel sampling, traffic paths, hopping offsets, ...) gets its own Philox
substream keyed by (master seed, stream name, index), so results replay
bit-exactly regardless of which other components draw numbers, and
per-frame substreams can be assigned deterministically.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["substream"]


def substream(seed: int, name: str, index: int = 0) -> np.random.Generator:
    """Return a Generator over a Philox stream keyed by (seed, name, index)."""
    tag = zlib.crc32(name.encode("utf-8"))
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(tag, int(index)))
    return np.random.Generator(np.random.Philox(ss))
