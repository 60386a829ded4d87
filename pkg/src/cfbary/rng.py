"""Named random streams.

Every random draw comes from PCG64 seeded by ``SeedSequence(seed,
spawn_key=(purpose, *key))``. Distinct purposes (or repeat indices) never
share a stream, so e.g. changing the fold split cannot perturb the data.

Streams in use:

- ``train`` / ``test``: synthetic data, keyed by repeat index
- ``folds``: estimation-fold split inside ``fit``
- ``perturb``: optional proxy noise injection in the benchmark
- ``oracle``: random instances for property checks
"""
from __future__ import annotations

import numpy as np

PURPOSES = {
    "train": 0,
    "test": 1,
    "folds": 2,
    "perturb": 3,
    "oracle": 4,
}


def stream(seed: int, purpose: str, *key: int) -> np.random.Generator:
    if purpose not in PURPOSES:
        raise KeyError(f"unknown stream purpose {purpose!r}")
    if seed < 0:
        raise ValueError("seed must be non-negative")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(PURPOSES[purpose], *map(int, key)))
    return np.random.Generator(np.random.PCG64(ss))
