"""Named random sub-streams derived from a single run seed."""

import zlib

import numpy as np


def stream_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def substream(seed: int, name: str, *extra: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), stream_key(name), *(int(e) for e in extra)])


def rng(seed: int, name: str, *extra: int) -> np.random.Generator:
    return np.random.default_rng(substream(seed, name, *extra))
