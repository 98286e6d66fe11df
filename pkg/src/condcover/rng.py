"""Counter-based random streams keyed by (seed, trial, tag).

Every consumer derives its own generator from the triple, so trials can run
in any order or in parallel and still reproduce bit-for-bit.
"""

from __future__ import annotations

import zlib

import numpy as np


def _tag_key(tag: str) -> int:
    # crc32 is stable across interpreter runs, unlike hash()
    return zlib.crc32(tag.encode("utf-8"))


def stream(seed: int, trial: int = 0, tag: str = "") -> np.random.Generator:
    """Return a Philox generator for the given seed, trial index and tag."""
    if seed < 0 or trial < 0:
        raise ValueError("seed and trial must be nonnegative")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(trial), _tag_key(tag)))
    return np.random.Generator(np.random.Philox(ss))
