"""Reproducible random streams.

Every Monte Carlo trial owns a Philox (counter-based) generator keyed by
``(master_seed, *indices)``.  The stream a trial sees therefore depends only
on its coordinates in the experiment, never on which worker ran it or in
which order.
"""

import hashlib
import numbers

import numpy as np


def _key_to_int(k):
    if isinstance(k, numbers.Integral) and not isinstance(k, bool) and k >= 0:
        return int(k)
    # strings and floats are hashed into a 64-bit word so they can key a stream
    digest = hashlib.blake2b(repr(k).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def stream(master_seed, *keys):
    """Generator for the sub-stream ``(master_seed, *keys)``."""
    entropy = [_key_to_int(master_seed)] + [_key_to_int(k) for k in keys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def as_generator(seed):
    """Accept ``None``, an int, a sequence of ints or a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        return np.random.default_rng()
    if isinstance(seed, (list, tuple)):
        return stream(*seed)
    return stream(seed)
