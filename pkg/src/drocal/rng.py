"""Counter-based random substreams.

Every random draw in the toolkit is keyed by ``(root seed, stream name,
index...)`` so that results never depend on call order or parallel
scheduling.
"""
from __future__ import annotations

import zlib

import numpy as np


def stream_id(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def substream(seed: int, name: str, *index: int) -> np.random.Generator:
    """Return a generator that depends only on ``(seed, name, *index)``."""
    key = (stream_id(name),) + tuple(int(i) for i in index)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, name: str, *index: int) -> int:
    """A plain integer seed for a child computation."""
    return int(substream(seed, name, *index).integers(0, 2**63 - 1))
