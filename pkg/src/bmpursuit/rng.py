"""Seeded random streams.

Every randomized routine takes an integer seed and builds a
``numpy.random.Generator`` on the PCG64 bit generator.  Gaussian draws use
numpy's ziggurat transform of the PCG64 output, which is deterministic and
platform independent for a fixed numpy major version.
"""

import numpy as np


def make_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def child_seeds(seed, count):
    """Independent per-item seeds; item ``i`` gets the same seed for any batch split."""
    ss = np.random.SeedSequence(seed)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in ss.spawn(count)]


def item_seed(seed, index):
    """Seed for item ``index`` of a batch, computed without materializing the batch."""
    ss = np.random.SeedSequence(seed, spawn_key=(int(index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
