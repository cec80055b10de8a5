"""Seeded random streams.

Every stream is a numpy ``Generator`` over PCG64 seeded through a
``SeedSequence``, so a run is reproducible across platforms and numpy
versions that keep the PCG64 bit stream.
"""

from __future__ import annotations

import numpy as np
from numpy.random import PCG64, Generator, SeedSequence

from warmslice.errors import InvalidInputError

ALGORITHM = "numpy.PCG64"
MAX_SEED = 2**64 - 1


class SeededGenerator:
    """A counted random stream; ``draws`` is the index of the next draw."""

    def __init__(self, seed_sequence: SeedSequence) -> None:
        self._seed_sequence = seed_sequence
        self._generator = Generator(PCG64(seed_sequence))
        self.draws = 0

    @property
    def seed(self) -> int:
        return int(self._seed_sequence.entropy)

    def random(self) -> tuple[float, int]:
        index = self.draws
        self.draws += 1
        return float(self._generator.random()), index

    def random_batch(self, size: int) -> np.ndarray:
        self.draws += size
        return self._generator.random(size)

    def exponential(self, scale: float) -> float:
        self.draws += 1
        return float(self._generator.exponential(scale))

    def integers(self, low: int, high: int) -> int:
        self.draws += 1
        return int(self._generator.integers(low, high))

    def spawn(self, count: int) -> list[SeededGenerator]:
        return [SeededGenerator(child) for child in self._seed_sequence.spawn(count)]


def seeded_generator(seed: int) -> SeededGenerator:
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise InvalidInputError("seed must be an integer")
    if not 0 <= seed <= MAX_SEED:
        raise InvalidInputError("seed must fit in an unsigned 64-bit integer")
    return SeededGenerator(SeedSequence(seed))


def replication_seeds(seed: int, count: int) -> list[int]:
    """Seeds for ``count`` replications; the first one is ``seed`` itself."""
    if count < 1:
        raise InvalidInputError("count must be at least 1")
    extra = Generator(PCG64(SeedSequence(seed))).integers(0, 2**63, size=count - 1)
    return [seed, *(int(value) for value in extra)]
