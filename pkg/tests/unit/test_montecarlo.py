import math

import numpy as np
import pytest

from app.core.errors import (
    EstimatorUnavailableError,
    NoCoverageError,
    OutOfOrderBlockError,
    PartialBlockError,
)
from app.core.random import RandomSource
from app.services.distribution import ProductDistribution
from app.services.montecarlo import (
    AgingAccumulator,
    BlockStats,
    MonteCarloEstimator,
    MonteCarloExpectationSource,
    SampleBatch,
    aged_update,
    block_stats,
    estimate_bit,
    estimate_bits,
    force_samples,
    run_block,
    uncovered_pairs,
)
from app.services.utility import CallbackUtility, PrivateUtilitySet


def _stats(block, means, counts=None):
    counts = counts or [[1] * len(m) for m in means]
    return BlockStats(
        block=block,
        counts=tuple(np.asarray(c) for c in counts),
        sums=tuple(np.asarray(m, dtype=float) * np.asarray(c) for m, c in zip(means, counts)),
    )


def test_point_mass_block(p0, rng):
    q = ProductDistribution.point_mass([2, 2], (1, 0))
    stats, batch = run_block(q, PrivateUtilitySet(p0), 10, rng)
    assert len(batch) == 10
    assert np.all(batch.moves == [1, 0])
    assert stats.counts[0].tolist() == [0, 10]
    assert stats.means[0][1] == 1.0
    assert math.isnan(stats.means[0][0])
    assert uncovered_pairs(stats) == [(0, 0), (1, 1)]


def test_large_block_estimates_conditional(p0, uniform22, rng):
    stats, _ = run_block(uniform22, PrivateUtilitySet(p0), 100_000, rng)
    assert abs(stats.means[0][0] - 0.5) < 0.01
    assert stats.counts[0].sum() == 100_000


def test_empty_block(p0, uniform22, rng):
    stats, batch = run_block(uniform22, PrivateUtilitySet(p0), 0, rng)
    assert len(batch) == 0
    assert all(c.sum() == 0 for c in stats.counts)


def test_parallel_block_is_reproducible(p0, uniform22):
    _, a = run_block(uniform22, PrivateUtilitySet(p0), 101, RandomSource(9), workers=4)
    _, b = run_block(uniform22, PrivateUtilitySet(p0), 101, RandomSource(9), workers=4)
    assert len(a) == 101
    assert np.array_equal(a.moves, b.moves)


def test_failed_evaluation_is_a_partial_block(uniform22, rng):
    def flaky(x):
        if x == (1, 1):
            raise RuntimeError("down")
        return 0.0

    u = CallbackUtility(flaky, [2, 2])
    with pytest.raises(PartialBlockError) as info:
        run_block(uniform22, PrivateUtilitySet(u), 50, rng)
    assert len(info.value.completed) == 0


def test_unbiased_over_many_blocks(p0, uniform22):
    rng = RandomSource(21)
    utilities = PrivateUtilitySet(p0)
    means = [run_block(uniform22, utilities, 100, rng)[0].means[0][0] for _ in range(200)]
    se = np.std(means, ddof=1) / np.sqrt(len(means))
    assert abs(np.mean(means) - 0.5) < 3 * se


def test_rms_error_scales_with_block_length(p0, uniform22):
    rng = RandomSource(4)
    rms = {}
    for length in (100, 1000, 10_000):
        errors = [
            run_block(uniform22, PrivateUtilitySet(p0), length, rng)[0].means[0][0] - 0.5
            for _ in range(100)
        ]
        rms[length] = float(np.sqrt(np.mean(np.square(errors))))
    for length, value in rms.items():
        c = value * np.sqrt(length)
        c_ref = rms[100] * np.sqrt(100)
        assert c_ref / 2 <= c <= c_ref * 2


def test_aging_single_block():
    acc = aged_update(AgingAccumulator.empty([2]), _stats(0, [[2.0, 3.0]]), 1.0)
    assert acc.estimates()[0].tolist() == [2.0, 3.0]


def test_aging_two_blocks():
    acc = AgingAccumulator.empty([1])
    acc = aged_update(acc, _stats(0, [[2.0]]), 1.0)
    acc = aged_update(acc, _stats(1, [[1.0]]), 1.0)
    expected = (1 + 2 * math.exp(-1)) / (1 + math.exp(-1))
    assert acc.estimates()[0][0] == pytest.approx(1.268941, abs=1e-6)
    assert acc.estimates()[0][0] == pytest.approx(expected, abs=1e-12)


def test_aging_large_constant_keeps_latest():
    acc = AgingAccumulator.empty([1])
    acc = aged_update(acc, _stats(0, [[2.0]]), 1e6)
    acc = aged_update(acc, _stats(3, [[1.0]]), 1e6)
    assert acc.estimates()[0][0] == pytest.approx(1.0)


@pytest.mark.parametrize("kappa", [0.0, 0.3, 1.0, 4.0])
def test_aging_matches_closed_form(kappa):
    gen = np.random.default_rng(1)
    acc = AgingAccumulator.empty([3])
    history = []
    for k in range(12):
        counts = gen.integers(0, 3, size=3)
        means = gen.random(3)
        history.append((k, counts, means))
        acc = aged_update(acc, _stats(k, [means], [counts]), kappa)
    last = history[-1][0]
    for j in range(3):
        num = sum(m[j] * math.exp(-kappa * (last - k)) for k, c, m in history if c[j] > 0)
        den = sum(math.exp(-kappa * (last - k)) for k, c, m in history if c[j] > 0)
        est = acc.estimates()[0][j]
        if den == 0:
            assert math.isnan(est)
        else:
            assert est == pytest.approx(num / den, abs=1e-12)


def test_aging_rejects_out_of_order():
    acc = aged_update(AgingAccumulator.empty([1]), _stats(2, [[1.0]]), 1.0)
    with pytest.raises(OutOfOrderBlockError):
        aged_update(acc, _stats(2, [[1.0]]), 1.0)


def test_force_samples(p0, uniform22, rng):
    utilities = PrivateUtilitySet(p0)
    assert len(force_samples(uniform22, utilities, [], rng)) == 0
    forced = force_samples(uniform22, utilities, [(0, 1)], rng, n_force=5)
    assert len(forced) == 5
    assert np.all(forced.moves[:, 0] == 1)
    assert np.all(forced.forced)
    assert np.all(forced.pinned == 0)


def test_forced_row_mean(p0, uniform22, rng):
    forced = force_samples(uniform22, PrivateUtilitySet(p0), [(0, 1)], rng, n_force=10_000)
    stats = block_stats(forced, (2, 2), 0)
    assert abs(stats.means[0][1] - 1.5) < 0.02
    # only the pinned agent's row sees forced samples
    assert stats.counts[1].sum() == 0
    assert stats.world_count == 0


def test_estimate_bits(p0, uniform22, rng):
    _, batch = run_block(uniform22, PrivateUtilitySet(p0), 100_000, rng)
    bits = estimate_bits(batch, 1.5, (2, 2))
    assert bits[0][0] == 1.0
    assert abs(bits[0][1] - 0.5) < 0.01
    assert estimate_bit(batch, 10.0, 0, 1) == 1.0
    assert estimate_bit(batch, -math.inf, 0, 0) == 0.0


def test_estimate_bit_without_coverage(p0, rng):
    q = ProductDistribution.point_mass([2, 2], (0, 0))
    _, batch = run_block(q, PrivateUtilitySet(p0), 20, rng)
    with pytest.raises(NoCoverageError):
        estimate_bit(batch, 1.0, 0, 1)
    with pytest.raises(NoCoverageError):
        estimate_bits(batch, 1.0, (2, 2))


def test_source_before_any_block():
    src = MonteCarloExpectationSource(AgingAccumulator.empty([2, 2]))
    q = ProductDistribution.uniform([2, 2])
    with pytest.raises(EstimatorUnavailableError):
        src.conditionals(q)
    with pytest.raises(EstimatorUnavailableError):
        src.expectation(q)


def test_estimator_covers_every_pair(p0):
    estimator = MonteCarloEstimator(PrivateUtilitySet(p0), 5, 1.0, RandomSource(2), n_force=2)
    q = ProductDistribution([[1 - 1e-9, 1e-9], [1 - 1e-9, 1e-9]])
    batch = estimator.advance(q)
    assert batch.forced.sum() == 4
    conditionals = estimator.source.conditionals(q)
    assert conditionals[0].tolist() == [0.0, 1.0]
    assert estimator.source.expectation(q) == 0.0


def test_difference_utilities_use_private_rows(p0, uniform22, rng):
    _, batch = run_block(uniform22, PrivateUtilitySet.difference(p0), 2000, rng)
    stats = block_stats(batch, (2, 2), 0)
    assert stats.means[0].tolist() == [0.0, 1.0]


def test_batch_records(p0, rng):
    q = ProductDistribution.uniform([2, 2])
    _, batch = run_block(q, PrivateUtilitySet(p0), 3, rng, block=4)
    records = [s.to_record() for s in batch.records()]
    assert [r["block"] for r in records] == [4, 4, 4]
    assert all(r["G"] == sum(r["x"]) for r in records)
    assert not any(r["forced"] for r in records)
    assert len(SampleBatch.concat([batch, batch])) == 6
