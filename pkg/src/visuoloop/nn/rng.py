"""Deterministic counter-based random streams.

Streams are backed by Philox (counter-based, platform-stable). Substreams are
derived by hashing the root seed together with a label path, so parallel
episode rollouts can draw from independent streams without shared state.
"""

from __future__ import annotations

import hashlib

import numpy as np


class RngStream:
    def __init__(self, seed: int, _path: tuple[str, ...] = ()):
        self.seed = int(seed)
        self.path = _path
        material = f"{self.seed}\x1f" + "\x1f".join(_path)
        digest = hashlib.sha256(material.encode()).digest()
        key = int.from_bytes(digest[:16], "little")
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def substream(self, label: str | int) -> "RngStream":
        return RngStream(self.seed, self.path + (str(label),))

    # -- sampling -----------------------------------------------------------
    def normal(self, shape=None, dtype=np.float32) -> np.ndarray:
        out = self._gen.standard_normal(size=shape)
        return np.asarray(out, dtype=dtype)

    def uniform(self, low: float = 0.0, high: float = 1.0, shape=None, dtype=np.float32) -> np.ndarray:
        out = self._gen.uniform(low, high, size=shape)
        return np.asarray(out, dtype=dtype)

    def integers(self, low: int, high: int, shape=None) -> np.ndarray:
        return self._gen.integers(low, high, size=shape)

    def choice(self, n: int) -> int:
        return int(self._gen.integers(0, n))

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def shuffle(self, seq: list) -> None:
        self._gen.shuffle(seq)
