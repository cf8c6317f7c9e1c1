"""Counter-based random streams keyed by (seed, purpose, index).

Every stream is a Philox generator whose key is derived from a SeedSequence
over the integer tuple ``(seed, purpose, index)``.  Streams never depend on
which worker consumes them, so results are identical for any worker count.
"""
from __future__ import annotations

import zlib

import numpy as np


def _tag(purpose: str) -> int:
    return zlib.crc32(purpose.encode())


def stream(seed: int, purpose: str, index: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed), _tag(purpose), int(index)])
    return np.random.Generator(np.random.Philox(ss))
