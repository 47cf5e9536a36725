"""Keyed, counter-based random streams.

Every random draw in the package comes from a Philox generator whose key is
derived from an integer path such as ``(seed, TRAIN, n, trial)``. Two calls with
the same path see the same numbers, independent of call order or of which
thread runs them.
"""

from __future__ import annotations

from typing import Union

import numpy as np

# stream purposes, used as the first element of a key path
TRAIN = 0
QUERY = 1
COIN = 2
MARGIN = 3
MATCH = 4

Stream = Union[int, tuple, np.random.Generator]


def keyed_rng(seed: int, *path: int) -> np.random.Generator:
    """Return a fresh Philox generator for ``seed`` and a key path."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def as_generator(stream: Stream) -> np.random.Generator:
    """Accept a seed, a ``(seed, *path)`` tuple or a ready generator."""
    if isinstance(stream, np.random.Generator):
        return stream
    if isinstance(stream, tuple):
        if not stream:
            raise ValueError("empty stream key")
        return keyed_rng(stream[0], *stream[1:])
    return keyed_rng(int(stream))
