"""
Maxent Lagrangian L(q) = beta E_q(G) - S(q), per-agent Boltzmann responses and the
parallel Brouwer update.

The constant -beta*gamma is never stored: gamma is eliminated by raising beta monotonically.
"""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from scipy.special import softmax

from app.core.errors import BetaDecreaseError, InvalidParameterError
from app.services.distribution import ProductDistribution, entropy
from app.services.oracle import exact_conditionals, exact_expectation
from app.services.utility import PrivateUtilitySet, WorldUtility, check_guard

logger = logging.getLogger(__name__)


@dataclass
class AnnealState:
    beta: float
    alpha: float = 0.05
    iteration: int = 0
    outer_round: int = 0
    threshold: float | None = None
    kappa_pct: float = 1.0
    kappa_age: float = 1.0
    block_length: int = 200

    def __post_init__(self) -> None:
        if self.beta < 0:
            raise InvalidParameterError(f"beta must be >= 0, got {self.beta}")
        if self.alpha <= 0:
            raise InvalidParameterError(f"step size must be > 0, got {self.alpha}")
        if not 0 < self.kappa_pct <= 1:
            raise InvalidParameterError(f"kappa_pct must lie in (0, 1], got {self.kappa_pct}")
        if self.kappa_age < 0 or self.block_length < 0:
            raise InvalidParameterError("aging constant and block length must be >= 0")

    def advance_beta(self, new_beta: float) -> None:
        if new_beta < self.beta:
            raise BetaDecreaseError(f"beta may not decrease ({self.beta} -> {new_beta})")
        self.beta = float(new_beta)

    def anneal(self, growth: float) -> float:
        self.advance_beta(self.beta * growth)
        self.outer_round += 1
        return self.beta


class ExpectationSource(ABC):
    """Provider of E(u_i | x_i = j) for every agent i and move j."""

    mode: str = "base"

    @abstractmethod
    def conditionals(self, q: ProductDistribution) -> list[np.ndarray]: ...

    @abstractmethod
    def expectation(self, q: ProductDistribution) -> float:
        """E(G) under q."""

    def conditional(self, q: ProductDistribution, agent: int, move: int) -> float:
        return float(self.conditionals(q)[agent][move])

    def agent_expectations(self, q: ProductDistribution) -> list[float]:
        return [float(p @ c) for p, c in zip(q.probs, self.conditionals(q))]


class ExactExpectationSource(ExpectationSource):
    mode = "exact"

    def __init__(self, utilities: WorldUtility | PrivateUtilitySet, guard: int | None = None):
        self.utilities = (
            utilities if isinstance(utilities, PrivateUtilitySet) else PrivateUtilitySet(utilities)
        )
        self.guard = guard
        check_guard(self.utilities.domain, guard)

    def conditionals(self, q: ProductDistribution) -> list[np.ndarray]:
        return exact_conditionals(self.utilities, q, self.guard)

    def expectation(self, q: ProductDistribution) -> float:
        return exact_expectation(self.utilities.world, q, self.guard)


def maxent_lagrangian(q: ProductDistribution, src: ExpectationSource, beta: float) -> float:
    return beta * src.expectation(q) - entropy(q)


def _response(costs: np.ndarray, beta: float) -> np.ndarray:
    # softmax shifts by the max exponent internally
    return softmax(-beta * np.asarray(costs, dtype=float))


def boltzmann_response(
    q: ProductDistribution, src: ExpectationSource, agent: int, beta: float
) -> np.ndarray:
    return _response(src.conditionals(q)[agent], beta)


def brouwer_step(
    q: ProductDistribution, src: ExpectationSource, beta: float, mix: float = 0.5
) -> ProductDistribution:
    """Every agent jumps (part-way, by `mix`) to its response against the pre-step q."""
    if not 0 < mix <= 1:
        raise InvalidParameterError(f"mixing weight must lie in (0, 1], got {mix}")
    costs = src.conditionals(q)
    new = [(1 - mix) * p + mix * _response(c, beta) for p, c in zip(q.probs, costs)]
    return ProductDistribution.from_weights(new)


def boltzmann_residual(q: ProductDistribution, src: ExpectationSource, beta: float) -> float:
    costs = src.conditionals(q)
    return max(float(np.max(np.abs(p - _response(c, beta)))) for p, c in zip(q.probs, costs))


def iterate_brouwer(
    q: ProductDistribution,
    src: ExpectationSource,
    beta: float,
    mix: float = 0.5,
    tol: float = 1e-12,
    max_iter: int = 10_000,
) -> tuple[ProductDistribution, int]:
    for it in range(1, max_iter + 1):
        nxt = brouwer_step(q, src, beta, mix)
        delta = nxt.max_abs_diff(q)
        q = nxt
        if delta < tol:
            return q, it
    logger.debug("brouwer iteration stopped at max_iter=%d", max_iter)
    return q, max_iter


def response_expected_cost(
    q: ProductDistribution, src: ExpectationSource, agent: int, beta: float
) -> float:
    costs = src.conditionals(q)[agent]
    return float(_response(costs, beta) @ costs)


def response_variance(
    q: ProductDistribution, src: ExpectationSource, agent: int, beta: float
) -> float:
    """Variance of the effective cost under agent i's response: minus dE/dbeta."""
    costs = src.conditionals(q)[agent]
    p = _response(costs, beta)
    mean = p @ costs
    return float(p @ (costs - mean) ** 2)
