"""Named, reproducible random streams.

Every consumer of randomness asks for a stream by ``(seed, *names)``.
Streams with different names are statistically independent, and the
mapping does not depend on call order or on the process that asks.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key(parts) -> list[int]:
    digest = hashlib.sha256("\x1f".join(str(p) for p in parts).encode()).digest()
    return [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]


def seed_sequence(seed: int, *names) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(seed), spawn_key=_key(names))


def named_rng(seed: int, *names) -> np.random.Generator:
    """Generator for the stream identified by ``(seed, *names)``."""
    return np.random.default_rng(seed_sequence(seed, *names))


def named_int(seed: int, *names) -> int:
    """A 31-bit integer seed for code that needs a plain integer (e.g. numba)."""
    return int(seed_sequence(seed, *names).generate_state(1)[0] & 0x7FFFFFFF)
