"""Deterministic byte stream for uids and identity seeds.

Counter-based SHA-256 so the position is a single integer that survives
serialization; a None seed falls back to os.urandom for interactive use.
"""

from __future__ import annotations

import hashlib
import os


class IdStream:
    def __init__(self, seed: int | None, counter: int = 0):
        self.seed = seed
        self.counter = int(counter)

    def bytes(self, n: int) -> bytes:
        if self.seed is None:
            return os.urandom(n)
        out = bytearray()
        while len(out) < n:
            block = hashlib.sha256(
                (self.seed & (2**64 - 1)).to_bytes(8, "big") + self.counter.to_bytes(8, "big")
            ).digest()
            out.extend(block)
            self.counter += 1
        return bytes(out[:n])

    def uid8(self) -> str:
        return self.bytes(4).hex()

    def id16(self) -> bytes:
        return self.bytes(16)

    def seed32(self) -> bytes:
        return self.bytes(32)
