"""Seeded random streams keyed by (seed, purpose, index)."""
import zlib

import numpy as np


def make_rng(seed, purpose, index=0):
    """Return an independent Philox stream for one (seed, purpose, index) key.

    ``index`` is an integer or a tuple of integers.

    Streams for different purposes or indices never share state, so draws do
    not depend on the order in which trials are executed.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    index = tuple(int(i) for i in np.atleast_1d(index))
    ss = np.random.SeedSequence(
        entropy=int(seed),
        spawn_key=(zlib.crc32(purpose.encode("utf-8")),) + index,
    )
    return np.random.Generator(np.random.Philox(ss))
