"""Named, independent random substreams derived from one master seed."""

from __future__ import annotations

import hashlib

import numpy as np

MAX_SEED = 2**64 - 1


def _name_key(name: str) -> int:
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def substream(seed: int, *names: str | int) -> np.random.Generator:
    """Generator for the substream addressed by ``(seed, *names)``.

    The same address always yields the same stream; distinct addresses yield
    statistically independent ones (``SeedSequence`` entropy mixing).
    """
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    key = [n if isinstance(n, int) else _name_key(n) for n in names]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))
