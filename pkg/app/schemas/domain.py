from __future__ import annotations

import math
from dataclasses import dataclass

from pydantic import BaseModel, ConfigDict, field_validator


class CategoricalDomain(BaseModel):
    """Agents with finite move sets; joint moves are indexed row-major, agent 0 slowest."""

    model_config = ConfigDict(frozen=True)

    move_counts: tuple[int, ...]

    @field_validator("move_counts")
    @classmethod
    def _positive(cls, v: tuple[int, ...]) -> tuple[int, ...]:
        if not v:
            raise ValueError("at least one agent is required")
        if any(int(n) < 1 for n in v):
            raise ValueError(f"every agent needs at least one move, got {list(v)}")
        return tuple(int(n) for n in v)

    @property
    def agent_count(self) -> int:
        return len(self.move_counts)

    @property
    def joint_size(self) -> int:
        # python int: may exceed a machine word
        return math.prod(self.move_counts)

    def contains(self, x: tuple[int, ...] | list[int]) -> bool:
        return len(x) == self.agent_count and all(
            0 <= int(m) < n for m, n in zip(x, self.move_counts)
        )

    def ravel(self, x: tuple[int, ...] | list[int]) -> int:
        index = 0
        for m, n in zip(x, self.move_counts):
            index = index * n + int(m)
        return index

    def unravel(self, index: int) -> tuple[int, ...]:
        moves: list[int] = []
        for n in reversed(self.move_counts):
            index, m = divmod(index, n)
            moves.append(m)
        return tuple(reversed(moves))


@dataclass(frozen=True, slots=True)
class JointSample:
    x: tuple[int, ...]
    g: float | None = None
    private: tuple[float, ...] | None = None
    block: int = 0
    forced: bool = False

    def to_record(self) -> dict:
        return {"block": self.block, "x": list(self.x), "G": self.g, "forced": self.forced}
