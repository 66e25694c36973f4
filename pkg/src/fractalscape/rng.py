"""Counter-based random substreams.

Every random draw in the package comes from a Philox generator keyed by
``(master_seed, purpose, index)``, so the numbers a given path or sample sees
do not depend on evaluation order or thread count.
"""

from __future__ import annotations

import os
import zlib

import numpy as np

DEFAULT_SEED = 20230601
SEED_ENV_VAR = "FRACTALSCAPE_SEED"


def master_seed(seed: int | None = None) -> int:
    """Resolve the master seed: explicit value, then env var, then default."""
    if seed is not None:
        return int(seed)
    env = os.environ.get(SEED_ENV_VAR)
    return int(env) if env else DEFAULT_SEED


def substream(seed: int, purpose: str, index: int = 0) -> np.random.Generator:
    tag = zlib.crc32(purpose.encode("utf-8"))
    ss = np.random.SeedSequence(entropy=int(seed) % 2**64, spawn_key=(tag, int(index)))
    return np.random.Generator(np.random.Philox(ss))
