"""Seeded random streams.

Every source of randomness in the package (initialization, dropout, data
shuffling, sampling) goes through an RngStream so that a run is a pure
function of its seeds. Streams are derived from a root seed with a spawn
key, and their exact position can be captured and restored, which is what
makes checkpoint resume bit-exact.
"""

from __future__ import annotations

import numpy as np


class RngStream:
    """A named, restorable PCG64 stream.

    Identical seed + key + call sequence gives identical outputs.
    """

    def __init__(self, seed: int, key: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        self._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=self.key))
        )

    def child(self, index: int) -> "RngStream":
        """Derive an independent stream; same (seed, key, index) -> same stream."""
        return RngStream(self.seed, self.key + (int(index),))

    # -- draws ------------------------------------------------------------
    def uniform(self, low: float, high: float, shape) -> np.ndarray:
        return self._gen.uniform(low, high, size=shape)

    def normal(self, loc: float, scale: float, shape) -> np.ndarray:
        return self._gen.normal(loc, scale, size=shape)

    def random(self, shape) -> np.ndarray:
        return self._gen.random(size=shape)

    def integers(self, low: int, high: int) -> int:
        return int(self._gen.integers(low, high))

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice_index(self, weights) -> int:
        """Sample an index proportionally to nonnegative weights (must sum > 0)."""
        w = np.asarray(weights, dtype=np.float64)
        total = w.sum()
        if total <= 0:
            raise ValueError("weights must sum to a positive value")
        return int(np.searchsorted(np.cumsum(w / total), self._gen.random(), side="right"))

    # -- state ------------------------------------------------------------
    def get_state(self) -> dict:
        """JSON-serializable snapshot of the stream position."""
        return {"seed": self.seed, "key": list(self.key), "state": self._gen.bit_generator.state}

    def set_state(self, state: dict) -> None:
        self.seed = int(state["seed"])
        self.key = tuple(int(k) for k in state["key"])
        self._gen.bit_generator.state = state["state"]

    @classmethod
    def from_state(cls, state: dict) -> "RngStream":
        stream = cls(int(state["seed"]), tuple(state["key"]))
        stream.set_state(state)
        return stream
