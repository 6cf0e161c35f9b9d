"""
Block Monte-Carlo estimation of the conditional costs E(g_i | x_i = j).

Samples are drawn from q in blocks of L, aggregated per (agent, move), aged exponentially
across blocks, and topped up by forced samples for moves a block never visited.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy.special import expit

from app.core.errors import (
    EstimatorUnavailableError,
    NoCoverageError,
    OutOfOrderBlockError,
    PartialBlockError,
    PDError,
)
from app.core.random import RandomSource
from app.schemas.domain import JointSample
from app.services.distribution import ProductDistribution, sample_moves
from app.services.lagrangian import ExpectationSource
from app.services.utility import PrivateUtilitySet

logger = logging.getLogger(__name__)

N_FORCE_DEFAULT = 3


@dataclass(frozen=True)
class SampleBatch:
    moves: np.ndarray  # (N, n_agents)
    values: np.ndarray  # world G, (N,)
    private: np.ndarray | None = None  # g_i, (N, n_agents)
    block: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    forced: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=bool))
    pinned: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    @classmethod
    def empty(cls, agent_count: int, with_private: bool = False) -> "SampleBatch":
        return cls(
            moves=np.empty((0, agent_count), dtype=np.int64),
            values=np.empty(0),
            private=np.empty((0, agent_count)) if with_private else None,
        )

    @classmethod
    def build(
        cls,
        moves: np.ndarray,
        values: np.ndarray,
        private: np.ndarray | None,
        block: int,
        pinned: np.ndarray | None = None,
    ) -> "SampleBatch":
        n = len(moves)
        pinned = np.full(n, -1, dtype=np.int64) if pinned is None else pinned
        return cls(
            moves=moves,
            values=values,
            private=private,
            block=np.full(n, block, dtype=np.int64),
            forced=pinned >= 0,
            pinned=pinned,
        )

    def __len__(self) -> int:
        return len(self.values)

    @property
    def agent_count(self) -> int:
        return self.moves.shape[1]

    def values_for(self, agent: int) -> np.ndarray:
        return self.values if self.private is None else self.private[:, agent]

    def subset(self, index: np.ndarray) -> "SampleBatch":
        return SampleBatch(
            moves=self.moves[index],
            values=self.values[index],
            private=None if self.private is None else self.private[index],
            block=self.block[index],
            forced=self.forced[index],
            pinned=self.pinned[index],
        )

    @staticmethod
    def concat(batches: Sequence["SampleBatch"]) -> "SampleBatch":
        batches = [b for b in batches if len(b)] or list(batches[:1])
        private = None if batches[0].private is None else np.vstack([b.private for b in batches])
        return SampleBatch(
            moves=np.vstack([b.moves for b in batches]),
            values=np.concatenate([b.values for b in batches]),
            private=private,
            block=np.concatenate([b.block for b in batches]),
            forced=np.concatenate([b.forced for b in batches]),
            pinned=np.concatenate([b.pinned for b in batches]),
        )

    def records(self) -> Iterator[JointSample]:
        for k in range(len(self)):
            yield JointSample(
                x=tuple(int(m) for m in self.moves[k]),
                g=float(self.values[k]),
                private=None if self.private is None else tuple(self.private[k].tolist()),
                block=int(self.block[k]),
                forced=bool(self.forced[k]),
            )


@dataclass(frozen=True)
class BlockStats:
    block: int
    counts: tuple[np.ndarray, ...]
    sums: tuple[np.ndarray, ...]
    world_count: int = 0
    world_sum: float = 0.0

    @property
    def means(self) -> list[np.ndarray]:
        return [
            np.where(c > 0, s / np.maximum(c, 1), np.nan) for c, s in zip(self.counts, self.sums)
        ]

    def has_mean(self, agent: int, move: int) -> bool:
        return bool(self.counts[agent][move] > 0)


def block_stats(samples: SampleBatch, move_counts: Sequence[int], block: int) -> BlockStats:
    """Per-(i, j) counts and sums; a forced sample only counts toward its pinned agent's row."""
    counts, sums = [], []
    for i, n in enumerate(move_counts):
        keep = ~samples.forced | (samples.pinned == i)
        moves = samples.moves[keep, i]
        counts.append(np.bincount(moves, minlength=n))
        sums.append(np.bincount(moves, weights=samples.values_for(i)[keep], minlength=n))
    natural = ~samples.forced
    return BlockStats(
        block=block,
        counts=tuple(counts),
        sums=tuple(sums),
        world_count=int(natural.sum()),
        world_sum=float(samples.values[natural].sum()),
    )


def uncovered_pairs(stats: BlockStats) -> list[tuple[int, int]]:
    return [(i, int(j)) for i, c in enumerate(stats.counts) for j in np.flatnonzero(c == 0)]


def _draw(
    q: ProductDistribution, utilities: PrivateUtilitySet, size: int, rng: RandomSource
) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    moves = sample_moves(q, rng, size)
    values, private = utilities.evaluate_batch(moves)
    return moves, values, private


def run_block(
    q: ProductDistribution,
    utilities: PrivateUtilitySet,
    block_length: int,
    rng: RandomSource,
    block: int = 0,
    workers: int = 1,
) -> tuple[BlockStats, SampleBatch]:
    """Draw L joint samples from q, evaluate them, aggregate per (agent, move)."""
    with_private = not utilities.is_team
    if block_length == 0:
        empty = SampleBatch.empty(q.agent_count, with_private)
        return block_stats(empty, q.move_counts, block), empty

    if workers == 1:
        chunks = [(rng, block_length)]
    else:
        # substream k draws its share; the reduce below is in stream order
        shares = [block_length // workers + (k < block_length % workers) for k in range(workers)]
        chunks = list(zip(rng.spawn(workers), shares))

    def draw(chunk: tuple[RandomSource, int]) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
        return _draw(q, utilities, chunk[1], chunk[0])

    done: list[SampleBatch] = [SampleBatch.empty(q.agent_count, with_private)]
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        results = pool.map(draw, chunks) if pool is not None else map(draw, chunks)
        for moves, values, private in results:
            done.append(SampleBatch.build(moves, values, private, block))
    except PDError as exc:
        raise PartialBlockError(f"block {block} aborted: {exc}", SampleBatch.concat(done)) from exc
    finally:
        if pool is not None:
            pool.shutdown()
    batch = SampleBatch.concat(done)
    return block_stats(batch, q.move_counts, block), batch


def force_samples(
    q: ProductDistribution,
    utilities: PrivateUtilitySet,
    uncovered: Sequence[tuple[int, int]],
    rng: RandomSource,
    n_force: int = N_FORCE_DEFAULT,
    block: int = 0,
) -> SampleBatch:
    """n_force samples per (i, j): agent i pinned to j, the others drawn from their q_k."""
    with_private = not utilities.is_team
    if not uncovered or n_force == 0:
        return SampleBatch.empty(q.agent_count, with_private)
    moves = sample_moves(q, rng, n_force * len(uncovered))
    pinned = np.repeat([i for i, _ in uncovered], n_force).astype(np.int64)
    pinned_moves = np.repeat([j for _, j in uncovered], n_force)
    moves[np.arange(len(moves)), pinned] = pinned_moves
    values, private = utilities.evaluate_batch(moves)
    return SampleBatch.build(moves, values, private, block, pinned=pinned)


@dataclass(frozen=True)
class AgingAccumulator:
    """Online exponential aging: numerator, denominator and last block per (i, j)."""

    numerators: tuple[np.ndarray, ...]
    denominators: tuple[np.ndarray, ...]
    last_block: tuple[np.ndarray, ...]
    block: int = -1
    world_numerator: float = 0.0
    world_denominator: float = 0.0
    world_last: int = -1

    @classmethod
    def empty(cls, move_counts: Sequence[int]) -> "AgingAccumulator":
        return cls(
            numerators=tuple(np.zeros(n) for n in move_counts),
            denominators=tuple(np.zeros(n) for n in move_counts),
            last_block=tuple(np.full(n, -1, dtype=np.int64) for n in move_counts),
        )

    def estimates(self) -> list[np.ndarray]:
        with np.errstate(invalid="ignore", divide="ignore"):
            return [
                np.where(d > 0, n / np.where(d > 0, d, 1.0), np.nan)
                for n, d in zip(self.numerators, self.denominators)
            ]

    def world_estimate(self) -> float:
        if self.world_denominator <= 0:
            return math.nan
        return self.world_numerator / self.world_denominator


def _decay(kappa_age: float, gap: np.ndarray | int) -> np.ndarray:
    return np.exp(-kappa_age * np.asarray(gap, dtype=float))


def aged_update(acc: AgingAccumulator, stats: BlockStats, kappa_age: float) -> AgingAccumulator:
    """Weighted average sum_m G(m) e^{-kappa (k-m)} / sum_m e^{-kappa (k-m)} over defined blocks."""
    k = stats.block
    if k <= acc.block:
        raise OutOfOrderBlockError(f"block {k} arrived after block {acc.block}")
    nums, dens, lasts = [], [], []
    for num, den, last, count, total in zip(
        acc.numerators, acc.denominators, acc.last_block, stats.counts, stats.sums
    ):
        seen = count > 0
        factor = np.where(last >= 0, _decay(kappa_age, k - last), 0.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            mean = np.where(seen, total / np.maximum(count, 1), 0.0)
        nums.append(np.where(seen, num * factor + mean, num))
        dens.append(np.where(seen, den * factor + 1.0, den))
        lasts.append(np.where(seen, k, last))
    world_num, world_den, world_last = acc.world_numerator, acc.world_denominator, acc.world_last
    if stats.world_count > 0:
        factor = float(_decay(kappa_age, k - world_last)) if world_last >= 0 else 0.0
        world_num = world_num * factor + stats.world_sum / stats.world_count
        world_den = world_den * factor + 1.0
        world_last = k
    return AgingAccumulator(
        numerators=tuple(nums),
        denominators=tuple(dens),
        last_block=tuple(lasts),
        block=k,
        world_numerator=world_num,
        world_denominator=world_den,
        world_last=world_last,
    )


def estimate_bits(
    samples: SampleBatch,
    threshold: float,
    move_counts: Sequence[int],
    smoothing: str = "heaviside",
    scale: float = 1.0,
) -> list[np.ndarray]:
    """q(G < K | x_i = j) per agent; logistic smoothing uses expit((K - G) / scale)."""
    if smoothing == "logistic":
        bit = expit((threshold - samples.values) / scale)
    else:
        bit = (samples.values < threshold).astype(float)
    out = []
    for i, n in enumerate(move_counts):
        keep = ~samples.forced | (samples.pinned == i)
        moves = samples.moves[keep, i]
        counts = np.bincount(moves, minlength=n)
        if np.any(counts == 0):
            missing = [(i, int(j)) for j in np.flatnonzero(counts == 0)]
            raise NoCoverageError(f"no samples for {missing}")
        out.append(np.bincount(moves, weights=bit[keep], minlength=n) / counts)
    return out


def estimate_bit(samples: SampleBatch, threshold: float, agent: int, move: int) -> float:
    keep = (~samples.forced | (samples.pinned == agent)) & (samples.moves[:, agent] == move)
    if not np.any(keep):
        raise NoCoverageError(f"no samples with x_{agent} = {move}")
    return float(np.mean(samples.values[keep] < threshold))


class MonteCarloExpectationSource(ExpectationSource):
    """Aged estimates; q is ignored because the samples already encode it."""

    mode = "monte-carlo"

    def __init__(self, accumulator: AgingAccumulator):
        self.accumulator = accumulator

    def conditionals(self, q: ProductDistribution) -> list[np.ndarray]:
        estimates = self.accumulator.estimates()
        missing = [
            (i, int(j)) for i, e in enumerate(estimates) for j in np.flatnonzero(np.isnan(e))
        ]
        if missing:
            raise EstimatorUnavailableError(f"no estimate yet for (agent, move) pairs {missing}")
        return estimates

    def expectation(self, q: ProductDistribution) -> float:
        value = self.accumulator.world_estimate()
        if math.isnan(value):
            raise EstimatorUnavailableError("no world-utility samples yet")
        return value


class MonteCarloEstimator:
    """Owns the block loop: run_block -> force_samples -> block_stats -> aged_update."""

    def __init__(
        self,
        utilities: PrivateUtilitySet,
        block_length: int,
        kappa_age: float,
        rng: RandomSource,
        n_force: int = N_FORCE_DEFAULT,
        workers: int = 1,
        sample_filter: Callable[[SampleBatch], SampleBatch] | None = None,
        on_samples: Callable[[SampleBatch], None] | None = None,
    ):
        self.utilities = utilities
        self.block_length = block_length
        self.kappa_age = kappa_age
        self.rng = rng
        self.n_force = n_force
        self.workers = workers
        self.sample_filter = sample_filter
        self.on_samples = on_samples
        self.accumulator = AgingAccumulator.empty(utilities.domain.move_counts)
        self.block = -1
        self.last_batch: SampleBatch | None = None

    @property
    def source(self) -> MonteCarloExpectationSource:
        return MonteCarloExpectationSource(self.accumulator)

    def advance(self, q: ProductDistribution) -> SampleBatch:
        self.block += 1
        stats, batch = run_block(
            q, self.utilities, self.block_length, self.rng, self.block, self.workers
        )
        used = self.sample_filter(batch) if self.sample_filter and len(batch) else batch
        stats = block_stats(used, q.move_counts, self.block)
        missing = uncovered_pairs(stats)
        if missing:
            forced = force_samples(q, self.utilities, missing, self.rng, self.n_force, self.block)
            batch = SampleBatch.concat([batch, forced])
            used = SampleBatch.concat([used, forced])
            stats = block_stats(used, q.move_counts, self.block)
            logger.debug(
                "block %d forced %d samples for %d pairs", self.block, len(forced), len(missing)
            )
        self.accumulator = aged_update(self.accumulator, stats, self.kappa_age)
        self.last_batch = batch
        if self.on_samples is not None:
            self.on_samples(batch)
        return batch

    def switch_utilities(self, utilities: PrivateUtilitySet) -> None:
        """Estimate a different utility from the next block on; old estimates are dropped."""
        self.utilities = utilities
        self.accumulator = replace(
            AgingAccumulator.empty(utilities.domain.move_counts), block=self.block
        )
