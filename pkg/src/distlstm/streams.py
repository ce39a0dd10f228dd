"""Counter-based random substreams.

Every random draw in an experiment comes from a generator keyed by
``(seed, purpose, node, t, ...)``, so results do not depend on the order in
which nodes are processed or on how many workers process them.
"""

from __future__ import annotations

import zlib
from typing import Callable

import numpy as np

RngFor = Callable[..., np.random.Generator]


def _key(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    part = int(part)
    if part < 0:
        raise ValueError("substream keys must be non-negative")
    return part


def substream(seed: int, *keys) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([_key(seed), *map(_key, keys)]))


def round_streams(seed: int, t: int) -> RngFor:
    """Return ``rng_for(purpose, node, *extra)`` for round ``t``."""

    def rng_for(purpose: str, node: int, *extra) -> np.random.Generator:
        return substream(seed, purpose, node, t, *extra)

    return rng_for
