"""
Problem generators and move symmetries.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from app.core.errors import InvalidParameterError, SymmetryError, UnknownGeneratorError
from app.core.random import RandomSource
from app.schemas.domain import CategoricalDomain
from app.services.distribution import ProductDistribution
from app.services.utility import TableUtility, WorldUtility, check_guard

logger = logging.getLogger(__name__)


def _shape(params: dict[str, Any]) -> tuple[int, ...]:
    if "move_counts" in params:
        return tuple(int(n) for n in params["move_counts"])
    return (int(params.get("moves", 2)),) * int(params.get("agents", 2))


def random_table(params: dict[str, Any], seed: int) -> TableUtility:
    shape = _shape(params)
    return TableUtility(RandomSource(seed).random(shape))


def sum_table(params: dict[str, Any], seed: int) -> TableUtility:
    shape = _shape(params)
    grids = np.meshgrid(*(np.arange(n) for n in shape), indexing="ij")
    return TableUtility(np.sum(grids, axis=0).astype(float))


def congestion_table(params: dict[str, Any], seed: int) -> TableUtility:
    """G(x) = sum_k c_k N(x, k), N(x, k) = number of moves chosen by exactly k agents."""
    agents = int(params.get("agents", 2))
    moves = int(params.get("moves", 2))
    costs = params.get("costs")
    if costs is None:
        costs = np.sort(RandomSource(seed).random(agents)).tolist()
    costs = np.asarray(costs, dtype=float)
    if costs.size != agents:
        raise InvalidParameterError(f"congestion needs one cost per multiplicity, got {costs.size}")
    table = np.empty((moves,) * agents)
    for x in itertools.product(range(moves), repeat=agents):
        load = np.bincount(np.asarray(x), minlength=moves)
        table[x] = float(sum(costs[k - 1] for k in load if k > 0))
    return TableUtility(table)


GENERATORS: dict[str, Callable[[dict[str, Any], int], TableUtility]] = {
    "random-table": random_table,
    "congestion": congestion_table,
    "sum": sum_table,
}


def generate_problem(
    name: str, params: dict[str, Any] | None = None, seed: int = 0
) -> tuple[WorldUtility, CategoricalDomain]:
    if name not in GENERATORS:
        raise UnknownGeneratorError(f"unknown generator {name!r}; known: {sorted(GENERATORS)}")
    utility = GENERATORS[name](params or {}, seed)
    logger.debug("generated %s problem with move counts %s", name, utility.domain.move_counts)
    return utility, utility.domain


@dataclass(frozen=True)
class SymmetryMap:
    """Per-agent move bijections T_i."""

    perms: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        for i, perm in enumerate(self.perms):
            if sorted(perm) != list(range(len(perm))):
                raise SymmetryError(f"agent {i}: {list(perm)} is not a permutation")

    @classmethod
    def identity(cls, move_counts: Sequence[int]) -> "SymmetryMap":
        return cls(tuple(tuple(range(n)) for n in move_counts))

    @classmethod
    def shared_swap(cls, agents: int, moves: int, a: int = 0, b: int = 1) -> "SymmetryMap":
        perm = list(range(moves))
        perm[a], perm[b] = perm[b], perm[a]
        return cls((tuple(perm),) * agents)

    def apply(self, x: Sequence[int]) -> tuple[int, ...]:
        return tuple(perm[m] for perm, m in zip(self.perms, x))


def apply_symmetry(q: ProductDistribution, symmetry: SymmetryMap) -> ProductDistribution:
    """q'_i(x_i) = q_i(T_i(x_i))."""
    if tuple(len(p) for p in symmetry.perms) != q.move_counts:
        raise SymmetryError("symmetry does not match the distribution's move counts")
    return ProductDistribution([p[list(perm)] for p, perm in zip(q.probs, symmetry.perms)])


def is_invariant(u: WorldUtility, symmetry: SymmetryMap, guard: int | None = None) -> bool:
    """G(x) == G(T(x)) for every joint move."""
    check_guard(u.domain, guard)
    table = u.table(guard)
    index = np.ix_(*(list(perm) for perm in symmetry.perms))
    return bool(np.array_equal(table, table[index]))
