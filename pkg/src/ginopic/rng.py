"""Named, seedable random streams.

Every stochastic draw in the toolkit comes from a stream identified by
(global seed, stream name).  Streams are independent counter-based Philox
generators keyed by the seed and a digest of the name, so the order in which
components consume randomness can never change what any other component
draws, and any parallel schedule reproduces the sequential result.
"""
from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def stream(seed: int, name: str) -> np.random.Generator:
    """Return the generator for stream `name` under `seed`.

    The same (seed, name) pair always yields a generator in the same
    initial state, on any platform.
    """
    digest = hashlib.blake2b(name.encode("utf-8"), digest_size=8).digest()
    key = np.array(
        [int(seed) & _MASK64, int.from_bytes(digest, "little")],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))


class RngStreams:
    """Factory bound to one global seed."""

    def __init__(self, seed: int):
        self.seed = int(seed)

    def stream(self, name: str) -> np.random.Generator:
        return stream(self.seed, name)

    def __repr__(self) -> str:
        return f"RngStreams(seed={self.seed})"
