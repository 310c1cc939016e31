"""Seeded random streams.

All randomness flows through :class:`numpy.random.Generator` objects backed
by the Philox counter-based bit generator.  Independent sub-streams are
derived from ``(seed, index...)`` with :class:`numpy.random.SeedSequence`
spawn keys, so the stream for block ``i`` never depends on how many blocks
exist or which worker runs it.
"""

import numpy as np

GENERATOR_NAME = "numpy.random.Philox(SeedSequence(seed, spawn_key=index))"


def substream(seed, *index):
    """Return the generator for sub-stream ``index`` of ``seed``."""
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(int(i) for i in index))
    return np.random.Generator(np.random.Philox(seq))


def as_generator(rng):
    """Accept a Generator, an int seed or None."""
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        return np.random.Generator(np.random.Philox())
    return substream(rng)
