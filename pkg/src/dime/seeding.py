"""Named sub-seed derivation.

Every random stream in the package is derived from one integer seed and a
tuple of stage names, so stages can be re-run in isolation and still draw the
same numbers.
"""

import hashlib

import numpy as np


def derive_seed(seed, *names):
    """Hash ``seed`` and ``names`` into a 63-bit integer seed."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(seed)).encode())
    for name in names:
        h.update(b"\x1f")
        h.update(str(name).encode())
    return int.from_bytes(h.digest(), "little") >> 1


def rng_for(seed, *names):
    return np.random.default_rng(derive_seed(seed, *names))
