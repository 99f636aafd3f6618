"""Named counter-based random streams.

Every random draw in the library comes from a Philox generator keyed by
an explicit (seed, *path) tuple, so each realization, layer and role has
its own stream and results are reproducible independently of execution
order (realizations can run in parallel or be regenerated in isolation).
"""

from __future__ import annotations

import numpy as np

# role tags for stream derivation
ROLE_INPUT = 0
ROLE_WEIGHTS = 1
ROLE_BIASES = 2
ROLE_PROBES = 3
ROLE_BINARY_SAMPLES = 4
ROLE_SHUFFLE = 5
ROLE_SUBSAMPLE = 6
ROLE_BLOBS = 7
ROLE_FIELDS = 8


def stream(seed: int, *path: int) -> np.random.Generator:
    """Philox generator for the stream named by (seed, *path)."""
    if not 0 <= seed < 2 ** 64:
        raise ValueError(f"seed must be a u64, got {seed}")
    ss = np.random.SeedSequence([int(seed), *(int(p) for p in path)])
    return np.random.Generator(np.random.Philox(ss))
