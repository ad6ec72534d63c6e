"""Counter-based random streams.

Every stream is addressed by ``(root_seed, *keys)`` so the numbers drawn for
one purpose never depend on how many were drawn for another, or on the order
in which independent replicates are evaluated.
"""

import numpy as np


def substream(seed, *keys):
    """Return a Philox generator for the stream ``keys`` under ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def child_seed(seed, *keys):
    """Derive a plain integer seed for a sub-computation."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
