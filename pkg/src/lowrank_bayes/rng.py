"""Deterministic stream splitting.

Every random draw in the package comes from a :class:`numpy.random.Generator`
built from one 64-bit master seed plus a tuple of string labels.  Each label
is hashed (CRC-32) into a spawn key, so ``stream(7, "replication", "3")`` is
the same stream on every platform and in every process, independent of the
order in which other streams were created.
"""

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def label_key(label):
    """Map a label (str or int) to a 32-bit spawn-key word."""
    return zlib.crc32(str(label).encode("utf-8")) & 0xFFFFFFFF


def seed_sequence(seed, *labels):
    seed = int(seed) & _MASK64
    return np.random.SeedSequence(entropy=seed, spawn_key=tuple(label_key(x) for x in labels))


def stream(seed, *labels):
    """Return an independent PCG64 generator for ``(seed, *labels)``."""
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, *labels)))


def derive_seed(seed, *labels):
    """A 64-bit integer seed derived from ``(seed, *labels)``."""
    return int(seed_sequence(seed, *labels).generate_state(1, np.uint64)[0])
