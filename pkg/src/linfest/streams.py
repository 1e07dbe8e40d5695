"""Counter-based random streams keyed by (seed, stream).

Philox is counter-based, so replication ``i`` can use stream ``i`` and the
results do not depend on the order in which replications run.
"""

import numpy as np


def stream_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Generator for the given (seed, stream) pair; streams are independent."""
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF),
                    np.uint64(stream & 0xFFFFFFFFFFFFFFFF)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
