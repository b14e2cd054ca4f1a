"""Counter-based random streams.

Every consumer of randomness addresses a stream by (master_seed, stream_index)
and, internally, by a small lane number.  Stream state is a pure function of
those integers, so results do not depend on how work is sharded across
workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

_U64_MAX = 2**64 - 1


@dataclass(frozen=True)
class RngSeed:
    """Addressable seed: a 64-bit master seed plus a stream index."""

    master_seed: int
    stream_index: int = 0

    def __post_init__(self) -> None:
        if not (0 <= int(self.master_seed) <= _U64_MAX):
            raise ConfigError(f"master_seed out of u64 range: {self.master_seed}")
        if not (0 <= int(self.stream_index) <= _U64_MAX):
            raise ConfigError(f"stream_index out of u64 range: {self.stream_index}")

    def tag(self) -> str:
        return f"{self.master_seed}:{self.stream_index}"


def stream(seed: RngSeed, lane: int = 0) -> np.random.Generator:
    """Generator for a lane of the given seed.

    Philox is keyed on (master_seed, stream_index); lanes are separated by
    counter jumps, so stream(seed, lane) is reproducible in isolation.
    """
    key = np.array([seed.master_seed, seed.stream_index], dtype=np.uint64)
    bits = np.random.Philox(key=key)
    if lane:
        bits = bits.jumped(lane)
    return np.random.Generator(bits)
