from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class RandomSource:
    """Seeded numpy generator; (seed, stream) fully determines the draw sequence."""

    seed: int
    stream: int = 0
    generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self) -> None:
        seq = np.random.SeedSequence(self.seed & (2**64 - 1), spawn_key=(self.stream,))
        self.generator = np.random.Generator(np.random.PCG64(seq))

    def spawn(self, count: int) -> list["RandomSource"]:
        # children derive from the parent's next draw so repeated spawns differ
        child_seed = int(self.generator.integers(0, 2**63 - 1))
        return [RandomSource(child_seed, stream=k) for k in range(count)]

    def random(self, size: int | tuple[int, ...] | None = None) -> np.ndarray:
        return self.generator.random(size)

    def uniform(self, low: float, high: float, size=None) -> np.ndarray:
        return self.generator.uniform(low, high, size)
