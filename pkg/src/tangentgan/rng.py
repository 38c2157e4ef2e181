"""Seed plumbing: one 64-bit root seed, Philox streams underneath.

Philox is counter-based and splittable, so named substreams derived from the
same root are independent and reproducible across platforms. Substreams are
addressed by string labels hashed to spawn keys; the mapping is stable, so a
reimplementation can match streams given the same labels.
"""

import zlib

import numpy as np


def make_rng(seed):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def child_rng(seed, *labels):
    """Independent substream of the root seed, addressed by labels."""
    key = tuple(zlib.crc32(str(l).encode()) for l in labels)
    seq = np.random.SeedSequence(int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(seq))


def uniform_latent(rng, n, d):
    """Latent prior draws: uniform on [-1, 1]^d."""
    return rng.uniform(-1.0, 1.0, (n, d))
