"""Deterministic randomness helpers.

All harness randomness (long-subset draws, component permutation, genre
injection) flows through a counter-mode SHA-256 stream instead of the stdlib
Mersenne generator. The stdlib documents that `sample`/`shuffle` sequences
may change between Python releases; a hash stream keyed by (seed, label)
gives byte-identical draws on any platform and interpreter version, which
replayable run records require.
"""
from __future__ import annotations

import hashlib

_U64 = 2**64


class HashStream:
    """Uniform integers derived from SHA-256(seed:label:counter)."""

    def __init__(self, seed: int, label: str = ""):
        self._prefix = f"{seed}:{label}:".encode()
        self._counter = 0

    def _next_u64(self) -> int:
        digest = hashlib.sha256(self._prefix + str(self._counter).encode()).digest()
        self._counter += 1
        return int.from_bytes(digest[:8], "big")

    def randbelow(self, n: int) -> int:
        """Uniform int in [0, n), via rejection sampling (no modulo bias)."""
        if n <= 0:
            raise ValueError("n must be positive")
        span = (_U64 // n) * n
        while True:
            value = self._next_u64()
            if value < span:
                return value % n

    def choice(self, items):
        return items[self.randbelow(len(items))]


def draw_key(seed: int, token: str) -> bytes:
    """Stable per-item sort key; smallest keys win a seeded draw."""
    return hashlib.sha256(f"{seed}:{token}".encode()).digest()
