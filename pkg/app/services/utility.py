"""
World and private utilities over joint moves. Lower is better.
"""

from __future__ import annotations

import itertools
import json
import logging
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from app.core.errors import GuardExceededError, InvalidParameterError, UtilityEvaluationError
from app.core.settings import settings
from app.schemas.domain import CategoricalDomain

logger = logging.getLogger(__name__)


def check_guard(domain: CategoricalDomain, guard: int | None = None) -> None:
    guard = settings.oracle_guard if guard is None else guard
    if domain.joint_size > guard:
        raise GuardExceededError(domain.joint_size, guard)


class WorldUtility(ABC):
    """G(x). Deterministic and finite on every joint move."""

    domain: CategoricalDomain

    @abstractmethod
    def evaluate_batch(self, moves: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def table(self, guard: int | None = None) -> np.ndarray:
        """Dense values with shape `domain.move_counts`."""

    def evaluate(self, x: Sequence[int]) -> float:
        return float(self.evaluate_batch(np.asarray([x], dtype=np.int64))[0])

    def transformed(self, f: Callable[[np.ndarray], np.ndarray], name: str = "f") -> "WorldUtility":
        return TransformedUtility(self, f, name)

    def _check_moves(self, moves: np.ndarray) -> np.ndarray:
        """Joint moves as an (N, n) int array; every index must lie inside the domain."""
        counts = np.asarray(self.domain.move_counts)
        moves = np.asarray(moves, dtype=np.int64)
        if moves.size == 0:
            return moves.reshape(0, counts.size)
        if moves.ndim != 2 or moves.shape[1] != counts.size:
            raise InvalidParameterError(
                f"expected joint moves of shape (N, {counts.size}), got {moves.shape}"
            )
        outside = np.any((moves < 0) | (moves >= counts), axis=1)
        if outside.any():
            bad = moves[np.argmax(outside)].tolist()
            raise InvalidParameterError(
                f"joint move {bad} is outside move counts {list(self.domain.move_counts)}"
            )
        return moves

    @staticmethod
    def _finite(values: np.ndarray) -> np.ndarray:
        if not np.all(np.isfinite(values)):
            raise UtilityEvaluationError("utility returned a non-finite value")
        return values


class TableUtility(WorldUtility):
    def __init__(self, values: np.ndarray | Sequence, move_counts: Sequence[int] | None = None):
        arr = np.asarray(values, dtype=float)
        if move_counts is not None:
            arr = arr.reshape(tuple(move_counts))
        self.domain = CategoricalDomain(move_counts=arr.shape)
        self._table = self._finite(arr)
        self._table.setflags(write=False)

    @classmethod
    def from_dict(cls, doc: dict) -> "TableUtility":
        counts = [int(n) for n in doc["move_counts"]]
        values = np.asarray(doc["values"], dtype=float)
        if values.size != int(np.prod(counts)):
            raise InvalidParameterError(
                f"{values.size} values do not fill a joint space of shape {counts}"
            )
        return cls(values, counts)

    @classmethod
    def from_json(cls, path: str | Path) -> "TableUtility":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        return {
            "move_counts": list(self.domain.move_counts),
            "values": self._table.ravel().tolist(),
        }

    def evaluate_batch(self, moves: np.ndarray) -> np.ndarray:
        moves = self._check_moves(moves)
        if len(moves) == 0:
            return np.empty(0)
        return self._table[tuple(moves.T)]

    def table(self, guard: int | None = None) -> np.ndarray:
        return self._table


class CallbackUtility(WorldUtility):
    """Wraps a callable on joint-move tuples; the dense table is built on first request."""

    def __init__(self, fn: Callable[[tuple[int, ...]], float], move_counts: Sequence[int]):
        self.domain = CategoricalDomain(move_counts=tuple(move_counts))
        self._fn = fn
        self._table: np.ndarray | None = None

    def evaluate_batch(self, moves: np.ndarray) -> np.ndarray:
        moves = self._check_moves(moves)
        try:
            values = np.array([float(self._fn(tuple(int(m) for m in x))) for x in moves])
        except Exception as exc:
            raise UtilityEvaluationError(f"callback failed: {exc}") from exc
        return self._finite(values)

    def table(self, guard: int | None = None) -> np.ndarray:
        if self._table is None:
            check_guard(self.domain, guard)
            logger.debug(
                "materializing callback utility over %d joint moves", self.domain.joint_size
            )
            grid = itertools.product(*(range(n) for n in self.domain.move_counts))
            joint = np.array(list(grid), dtype=np.int64)
            self._table = self.evaluate_batch(joint).reshape(self.domain.move_counts)
            self._table.setflags(write=False)
        return self._table


class TransformedUtility(WorldUtility):
    def __init__(self, base: WorldUtility, f: Callable[[np.ndarray], np.ndarray], name: str = "f"):
        self.base = base
        self.domain = base.domain
        self.f = f
        self.name = name

    def evaluate_batch(self, moves: np.ndarray) -> np.ndarray:
        return self._finite(np.asarray(self.f(self.base.evaluate_batch(moves)), dtype=float))

    def table(self, guard: int | None = None) -> np.ndarray:
        return self._finite(np.asarray(self.f(self.base.table(guard)), dtype=float))


class DifferenceUtility(WorldUtility):
    """g_i(x) = G(x) - G(x with x_i set to move 0)."""

    def __init__(self, world: WorldUtility, agent: int):
        self.world = world
        self.agent = agent
        self.domain = world.domain

    def evaluate_batch(self, moves: np.ndarray) -> np.ndarray:
        moves = self._check_moves(moves)
        clamped = moves.copy()
        clamped[:, self.agent] = 0
        return self.world.evaluate_batch(moves) - self.world.evaluate_batch(clamped)

    def table(self, guard: int | None = None) -> np.ndarray:
        full = self.world.table(guard)
        baseline = np.take(full, [0], axis=self.agent)
        return full - baseline


class PrivateUtilitySet:
    """Per-agent utilities g_i; without any, every agent plays the team game g_i = G."""

    def __init__(self, world: WorldUtility, private: Sequence[WorldUtility] | None = None):
        self.world = world
        if private is not None and len(private) != world.domain.agent_count:
            raise InvalidParameterError(
                f"{len(private)} private utilities for {world.domain.agent_count} agents"
            )
        self.private = list(private) if private is not None else None

    @classmethod
    def difference(cls, world: WorldUtility) -> "PrivateUtilitySet":
        return cls(world, [DifferenceUtility(world, i) for i in range(world.domain.agent_count)])

    @property
    def domain(self) -> CategoricalDomain:
        return self.world.domain

    @property
    def is_team(self) -> bool:
        return self.private is None

    def for_agent(self, i: int) -> WorldUtility:
        return self.world if self.private is None else self.private[i]

    def evaluate_batch(self, moves: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
        """World values (N,) and, when private utilities exist, per-agent values (N, n)."""
        world = self.world.evaluate_batch(moves)
        if self.private is None:
            return world, None
        per_agent = np.column_stack([g.evaluate_batch(moves) for g in self.private])
        return world, per_agent
