"""Seedable, splittable randomness.

All randomness in the package flows through numpy's PCG64 generator.  Child
streams are derived from a root seed plus a string/int path via SeedSequence,
so every component gets an independent, reproducible stream and results do not
depend on evaluation order.
"""

from __future__ import annotations

import zlib

import numpy as np


def _path_entropy(part: int | str) -> int:
    # type-tagged and offset by one: SeedSequence drops trailing zero words,
    # so a label must never hash to 0 or paths like (x,) and (x, 0) collide
    if isinstance(part, str):
        return zlib.crc32(b"s:" + part.encode("utf-8")) + 1
    return zlib.crc32(b"i:" + str(int(part)).encode("ascii")) + 1


def child_seed(seed: int, *path: int | str) -> int:
    """Derive a 64-bit child seed from a root seed and a path of labels."""
    ss = np.random.SeedSequence([_path_entropy(seed)] + [_path_entropy(p) for p in path])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def make_rng(seed: int, *path: int | str) -> np.random.Generator:
    """PCG64 generator for the given seed/path."""
    if path:
        seed = child_seed(seed, *path)
    return np.random.Generator(np.random.PCG64(seed))
