"""Deterministic, worker-independent random number streams.

Every stochastic quantity in the package is drawn from a Philox
counter-based generator keyed by ``(stream_seed, sample_index)``, so the
noise attached to sample ``i`` of a run depends only on those two
integers -- never on batch size, evaluation order, or worker count.
Named sub-streams are derived by hashing, which keeps seeds stable
across processes and platforms (no reliance on Python's randomized
``hash``).
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from a tuple of ints/strings."""
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(repr(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


def generator(stream_seed: int, sample_index: int = 0) -> np.random.Generator:
    """Philox generator keyed by (stream_seed, sample_index)."""
    key = ((int(stream_seed) & _MASK64) << 64) | (int(sample_index) & _MASK64)
    return np.random.Generator(np.random.Philox(key=key))
