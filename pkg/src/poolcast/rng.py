"""Counter-based random streams.

Draw ``i`` of a stream is ``splitmix64(key + (i + 1) * GAMMA)`` where the key
is derived from ``(seed, label)`` with BLAKE2b.  Any block of draws can be
produced independently of the others, so datasets are reproducible across
languages and independent of how work is split between threads.
"""

from __future__ import annotations

import hashlib

import numpy as np
from scipy import special

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO53 = float(2**53)


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def derive_key(seed: int, label: str) -> int:
    digest = hashlib.blake2b(f"{int(seed)}:{label}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class Stream:
    """A labelled substream; successive calls continue where the last stopped."""

    def __init__(self, seed: int, label: str = "", offset: int = 0):
        self.seed = int(seed)
        self.label = label
        self.key = np.uint64(derive_key(seed, label))
        self.offset = int(offset)

    def child(self, label: str) -> "Stream":
        return Stream(self.seed, f"{self.label}/{label}" if self.label else label)

    def raw(self, n: int, start: int | None = None) -> np.ndarray:
        """``n`` 64-bit words beginning at counter ``start`` (default: continue)."""
        begin = self.offset if start is None else int(start)
        counters = np.arange(begin + 1, begin + n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            out = _mix(self.key + counters * _GAMMA)
        if start is None:
            self.offset += n
        return out

    def uniform(self, size, start: int | None = None) -> np.ndarray:
        """Uniform draws on the open interval (0, 1)."""
        shape = (size,) if np.ndim(size) == 0 else tuple(size)
        n = int(np.prod(shape))
        words = self.raw(n, start) >> np.uint64(11)
        return ((words.astype(np.float64) + 0.5) / _TWO53).reshape(shape)

    def normal(self, size, start: int | None = None) -> np.ndarray:
        return special.ndtri(self.uniform(size, start))

    def permutation(self, n: int) -> np.ndarray:
        return np.argsort(self.uniform(n), kind="stable")
