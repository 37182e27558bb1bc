"""Seeded random streams.

Everything random in the toolkit draws from Philox4x32-10, a counter-based
generator whose output is identical across platforms for a given seed.
Sub-streams are derived by hashing a label into the key, so adding a new
consumer never shifts the numbers an existing consumer sees.
"""

from __future__ import annotations

import hashlib

import numpy as np

ALGORITHM = "Philox4x32-10 (numpy.random.Philox)"


def make_rng(seed: int, *labels) -> np.random.Generator:
    if not labels:
        return np.random.Generator(np.random.Philox(int(seed)))
    digest = hashlib.sha256(repr((int(seed),) + tuple(labels)).encode()).digest()
    return np.random.Generator(np.random.Philox(key=int.from_bytes(digest[:16], "little")))


def derive_seed(seed: int, *labels) -> int:
    digest = hashlib.sha256(repr((int(seed),) + tuple(labels)).encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1
