"""Counter-based random streams keyed by (seed, replication, subject).

Every stream is an independent Philox generator derived through
:class:`numpy.random.SeedSequence` spawn keys, so draws never depend on the
order in which replications or subjects are processed.
"""

from __future__ import annotations

import numpy as np

__all__ = ["stream"]


def stream(seed: int, *key: int) -> np.random.Generator:
    """Generator for the substream ``key`` of ``seed``."""
    if seed < 0 or any(k < 0 for k in key):
        raise ValueError("seed and keys must be nonnegative")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
