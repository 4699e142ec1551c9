"""
Seed splitting.
All randomness in a run flows from one root seed; each subsystem draws
from its own child stream so that changing one never shifts another.
"""

from typing import Union
import zlib

import numpy as np

SeedKey = Union[int, str]


def _key(part: SeedKey) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part) & 0xFFFFFFFF


def seed_sequence(root: int, *keys: SeedKey) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(root), spawn_key=tuple(_key(k) for k in keys))


def make_rng(root: int, *keys: SeedKey) -> np.random.Generator:
    """Generator for the child stream (root, *keys)."""
    return np.random.default_rng(seed_sequence(root, *keys))


def derive_seed(root: int, *keys: SeedKey) -> int:
    """Integer seed for the child stream (root, *keys)."""
    return int(seed_sequence(root, *keys).generate_state(1, dtype=np.uint32)[0])
