"""
Alternative Lagrangians and update rules aimed at argmin_x G(x).

Percentile restriction of E(G), concave utility transforms, the threshold (single-bit)
gradient update, and the pq-KL marginal updates toward the truncated distribution theta_q
and toward q(x) e^{-beta G(x)}.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit, softmax

from app.core.errors import EmptyTruncationError, InvalidParameterError
from app.core.settings import settings
from app.services.distribution import ProductDistribution, project_interior
from app.services.lagrangian import ExpectationSource
from app.services.montecarlo import SampleBatch
from app.services.oracle import contract_except, joint_probabilities
from app.services.utility import (
    PrivateUtilitySet,
    TransformedUtility,
    WorldUtility,
    check_guard,
)

logger = logging.getLogger(__name__)


def percentile_filter(samples: SampleBatch, kappa_pct: float) -> SampleBatch:
    """Keep the ceil(kappa * N) lowest-G samples; ties go to the earlier sample."""
    if len(samples) == 0:
        raise InvalidParameterError("percentile filter needs at least one sample")
    if not 0 < kappa_pct <= 1:
        raise InvalidParameterError(f"kappa_pct must lie in (0, 1], got {kappa_pct}")
    keep = math.ceil(kappa_pct * len(samples))
    order = np.argsort(samples.values, kind="stable")[:keep]
    return samples.subset(np.sort(order))


def percentile_threshold(samples: SampleBatch, pct: float) -> float:
    """K such that the ceil(pct * N) best natural samples (and their ties) satisfy G < K."""
    values = np.sort(samples.values[~samples.forced])
    if values.size == 0:
        raise InvalidParameterError("threshold needs at least one natural sample")
    v = values[max(math.ceil(pct * values.size), 1) - 1]
    return float(np.nextafter(v, np.inf))


def exact_percentile_threshold(
    u: WorldUtility, q: ProductDistribution, pct: float, guard: int | None = None
) -> float:
    check_guard(u.domain, guard)
    values = u.table(guard).ravel()
    mass = joint_probabilities(q, guard).ravel()
    order = np.argsort(values, kind="stable")
    cum = np.cumsum(mass[order])
    idx = min(int(np.searchsorted(cum, pct - 1e-12, side="left")), values.size - 1)
    return float(np.nextafter(values[order][idx], np.inf))


def _elite_mask(table: np.ndarray, joint: np.ndarray, kappa_pct: float) -> np.ndarray:
    """x is kept iff the q-mass of strictly better joint moves is below kappa."""
    flat = table.ravel()
    order = np.argsort(flat, kind="stable")
    sorted_vals = flat[order]
    before = np.concatenate([[0.0], np.cumsum(joint.ravel()[order])])
    better = before[np.searchsorted(sorted_vals, flat, side="left")]
    return (better < kappa_pct).reshape(table.shape)


def exact_percentile_conditionals(
    utilities: WorldUtility | PrivateUtilitySet,
    q: ProductDistribution,
    kappa_pct: float,
    guard: int | None = None,
) -> tuple[list[np.ndarray], float]:
    """E(g_i | x_i = j) and E(G) restricted to the lower kappa percentile of G under q."""
    utilities = (
        utilities if isinstance(utilities, PrivateUtilitySet) else PrivateUtilitySet(utilities)
    )
    check_guard(utilities.domain, guard)
    world = utilities.world.table(guard)
    joint = joint_probabilities(q, guard)
    elite = _elite_mask(world, joint, kappa_pct).astype(float)
    conditionals = []
    for i in range(q.agent_count):
        table = utilities.for_agent(i).table(guard)
        num = contract_except(table * elite, q, i)
        den = contract_except(elite, q, i)
        plain = contract_except(table, q, i)
        with np.errstate(invalid="ignore", divide="ignore"):
            conditionals.append(np.where(den > 0, num / np.where(den > 0, den, 1.0), plain))
    weights = joint * elite
    return conditionals, float(np.sum(weights * world) / np.sum(weights))


class PercentileExpectationSource(ExpectationSource):
    mode = "exact"

    def __init__(
        self,
        utilities: WorldUtility | PrivateUtilitySet,
        kappa_pct: float,
        guard: int | None = None,
    ):
        self.utilities = utilities
        self.kappa_pct = kappa_pct
        self.guard = guard

    def conditionals(self, q: ProductDistribution) -> list[np.ndarray]:
        return exact_percentile_conditionals(self.utilities, q, self.kappa_pct, self.guard)[0]

    def expectation(self, q: ProductDistribution) -> float:
        return exact_percentile_conditionals(self.utilities, q, self.kappa_pct, self.guard)[1]


def transform_utility(
    u: WorldUtility, kind: str = "exponential", params: dict[str, float] | None = None
) -> WorldUtility:
    """f(G) for concave nowhere-decreasing f; the default is f(G) = -exp(-lam G)."""
    params = params or {}
    if kind == "identity":
        return TransformedUtility(u, lambda g: g, "identity")
    if kind == "exponential":
        lam = float(params.get("lam", 1.0))
        if lam <= 0:
            raise InvalidParameterError(f"exponential transform needs lam > 0, got {lam}")
        return TransformedUtility(u, lambda g: -np.exp(-lam * g), f"exponential(lam={lam})")
    if kind == "linear":
        scale = float(params.get("scale", 1.0))
        offset = float(params.get("offset", 0.0))
        if scale <= 0:
            raise InvalidParameterError(f"linear transform needs scale > 0, got {scale}")
        return TransformedUtility(u, lambda g: scale * g + offset, f"linear({scale}, {offset})")
    raise InvalidParameterError(f"unknown transform {kind!r}")


def exact_bits(
    u: WorldUtility,
    q: ProductDistribution,
    threshold: float,
    smoothing: str = "heaviside",
    scale: float = 1.0,
    guard: int | None = None,
) -> list[np.ndarray]:
    """q(G < K | x_i = j) per agent, computed by enumeration."""
    check_guard(u.domain, guard)
    table = u.table(guard)
    if smoothing == "logistic":
        bit = expit((threshold - table) / scale)
    else:
        bit = (table < threshold).astype(float)
    return [contract_except(bit, q, i) for i in range(q.agent_count)]


def threshold_gradient_step(
    q: ProductDistribution,
    bits: Sequence[np.ndarray],
    beta: float,
    alpha: float,
    eps_floor: float | None = None,
) -> ProductDistribution:
    """Add alpha [beta b_i + ln q_i - mean(beta b_i + ln q_i)] to each q_i."""
    raw = []
    for p, b in zip(q.probs, bits):
        v = beta * np.asarray(b, dtype=float) + np.log(p)
        raw.append(p + alpha * (v - v.mean()))
    return project_interior(raw, eps_floor)


def truncated_distribution(
    u: WorldUtility, q: ProductDistribution, threshold: float, guard: int | None = None
) -> np.ndarray:
    """theta_q(x) proportional to q(x) for G(x) < K, zero elsewhere."""
    check_guard(u.domain, guard)
    weights = joint_probabilities(q, guard) * (u.table(guard) < threshold)
    mass = weights.sum()
    if mass <= 0:
        raise EmptyTruncationError(f"no probability mass below K={threshold}")
    return weights / mass


def _marginals(joint: np.ndarray) -> list[np.ndarray]:
    n = joint.ndim
    return [joint.sum(axis=tuple(k for k in range(n) if k != i)) for i in range(n)]


def _weighted_frequencies(samples: SampleBatch, weights: np.ndarray, move_counts: Sequence[int]):
    return [
        np.bincount(samples.moves[:, i], weights=weights, minlength=n) / weights.sum()
        for i, n in enumerate(move_counts)
    ]


def klpq_threshold_step(
    q: ProductDistribution,
    threshold: float,
    utility: WorldUtility | None = None,
    samples: SampleBatch | None = None,
    eps_floor: float | None = None,
    guard: int | None = None,
) -> ProductDistribution:
    """New q_i = marginal of theta_q: q_i(x_i) q(G < K | x_i) / q(G < K)."""
    eps = settings.eps_floor if eps_floor is None else eps_floor
    if utility is not None:
        marginals = _marginals(truncated_distribution(utility, q, threshold, guard))
    else:
        if samples is None:
            raise InvalidParameterError("klpq threshold step needs a utility or samples")
        natural = samples.subset(~samples.forced)
        elite = (natural.values < threshold).astype(float)
        if elite.sum() == 0:
            raise EmptyTruncationError(f"no sample below K={threshold}")
        marginals = [m + eps for m in _weighted_frequencies(natural, elite, q.move_counts)]
    return project_interior(marginals, eps)


def klpq_exponential_step(
    q: ProductDistribution,
    beta: float,
    utility: WorldUtility | None = None,
    samples: SampleBatch | None = None,
    eps_floor: float | None = None,
    guard: int | None = None,
) -> ProductDistribution:
    """New q_i = marginal of q(x) e^{-beta G(x)}: q_i(x_i) E(e^{-beta G}|x_i) / E(e^{-beta G})."""
    eps = settings.eps_floor if eps_floor is None else eps_floor
    if utility is not None:
        check_guard(utility.domain, guard)
        with np.errstate(divide="ignore"):
            logits = np.log(joint_probabilities(q, guard)) - beta * utility.table(guard)
        marginals = _marginals(softmax(logits))
    else:
        if samples is None:
            raise InvalidParameterError("klpq exponential step needs a utility or samples")
        natural = samples.subset(~samples.forced)
        if len(natural) == 0:
            raise EmptyTruncationError("no natural samples to reweight")
        weights = softmax(-beta * natural.values)
        marginals = [m + eps for m in _weighted_frequencies(natural, weights, q.move_counts)]
    return project_interior(marginals, eps)


@dataclass
class StallDetector:
    """Engage the utility transform after `patience` steps without improvement, for `hold` steps."""

    patience: int = 10
    hold: int = 10
    best: float = math.inf
    stalled_for: int = 0
    engaged_for: int = -1

    @property
    def engaged(self) -> bool:
        return self.engaged_for >= 0

    def reset(self) -> None:
        self.best = math.inf
        self.stalled_for = 0
        self.engaged_for = -1

    def update(self, value: float) -> bool:
        if self.engaged:
            self.engaged_for += 1
            if self.engaged_for >= self.hold:
                logger.info("transform released after %d steps", self.hold)
                self.reset()
                self.best = value
            return self.engaged
        if value < self.best - 1e-12:
            self.best = value
            self.stalled_for = 0
        else:
            self.stalled_for += 1
            if self.stalled_for >= self.patience:
                logger.info("no improvement for %d steps, engaging transform", self.patience)
                self.engaged_for = 0
        return self.engaged
