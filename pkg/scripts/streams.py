"""
Seeded random streams.

Each agent draws from its own numpy Generator keyed by the master seed and the
agent's name, so adding or removing an agent never shifts another agent's draws.
"""

import hashlib

from numpy.random import SFC64, Generator, SeedSequence

UINT64_LIMIT = 2 ** 64


def stable_key(name: str) -> int:
    """First 4 bytes of SHA-256(name) as an unsigned int (stable across runs and platforms)."""
    return int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:4], "big")


def agent_stream(seed: int, name: str) -> Generator:
    if not 0 <= seed < UINT64_LIMIT:
        raise ValueError(f"Seed must be a 64-bit unsigned value, got {seed}")
    return Generator(SFC64(SeedSequence(entropy=seed, spawn_key=(stable_key(name),))))


def draw_u64(rng: Generator) -> int:
    return int.from_bytes(rng.bytes(8), "big")
