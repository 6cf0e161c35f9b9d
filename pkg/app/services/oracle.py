"""
Brute-force exact computations over small joint spaces.

Ground truth for the tests and the exact-mode expectation source. Every public function
enumerates the full joint table and therefore checks the oracle guard first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, rel_entr

from app.services.distribution import ProductDistribution, entropy
from app.services.utility import PrivateUtilitySet, WorldUtility, check_guard


@dataclass(frozen=True)
class CanonicalEnsemble:
    """p^beta(x) proportional to exp(-beta G(x)), dense over the joint space."""

    beta: float
    probs: np.ndarray
    log_partition: float

    def marginals(self) -> ProductDistribution:
        n = self.probs.ndim
        return ProductDistribution(
            [self.probs.sum(axis=tuple(k for k in range(n) if k != i)) for i in range(n)]
        )


def _table(u: WorldUtility, guard: int | None) -> np.ndarray:
    check_guard(u.domain, guard)
    return u.table(guard)


def contract_except(table: np.ndarray, q: ProductDistribution, agent: int) -> np.ndarray:
    """sum over x_(i) of table(x_i, x_(i)) prod_{k != i} q_k(x_k), as a vector over x_i."""
    operands: list = [table, list(range(table.ndim))]
    for k, p in enumerate(q.probs):
        if k != agent:
            operands += [p, [k]]
    return np.einsum(*operands, [agent])


def joint_probabilities(q: ProductDistribution, guard: int | None = None) -> np.ndarray:
    check_guard(q.domain, guard)
    operands: list = []
    for k, p in enumerate(q.probs):
        operands += [p, [k]]
    return np.einsum(*operands, list(range(q.agent_count)))


def exact_conditionals(
    u: WorldUtility | PrivateUtilitySet, q: ProductDistribution, guard: int | None = None
) -> list[np.ndarray]:
    """Per-agent vectors E(u_i | x_i = j); a PrivateUtilitySet resolves u_i per agent."""
    utilities = u if isinstance(u, PrivateUtilitySet) else PrivateUtilitySet(u)
    out = []
    for i in range(q.agent_count):
        out.append(contract_except(_table(utilities.for_agent(i), guard), q, i))
    return out


def exact_conditional(
    u: WorldUtility, q: ProductDistribution, agent: int, move: int, guard: int | None = None
) -> float:
    return float(contract_except(_table(u, guard), q, agent)[move])


def exact_expectation(u: WorldUtility, q: ProductDistribution, guard: int | None = None) -> float:
    table = _table(u, guard)
    return float(np.sum(table * joint_probabilities(q, guard)))


def canonical_ensemble(u: WorldUtility, beta: float, guard: int | None = None) -> CanonicalEnsemble:
    table = _table(u, guard)
    logits = -beta * table
    log_z = float(logsumexp(logits))
    return CanonicalEnsemble(beta=beta, probs=np.exp(logits - log_z), log_partition=log_z)


def canonical_marginals(
    u: WorldUtility, beta: float, guard: int | None = None
) -> ProductDistribution:
    """Product of the marginals of p^beta: the pq-KL optimum among product distributions."""
    return canonical_ensemble(u, beta, guard).marginals()


def global_minimum(u: WorldUtility, guard: int | None = None) -> tuple[tuple[int, ...], float]:
    table = _table(u, guard)
    # argmin returns the first occurrence: lowest joint index wins ties
    index = int(np.argmin(table.ravel()))
    return u.domain.unravel(index), float(table.ravel()[index])


def qp_distance(
    u: WorldUtility, q: ProductDistribution, beta: float, guard: int | None = None
) -> float:
    """KL(q || p^beta) = beta E_q(G) - S(q) + ln Z(beta)."""
    ensemble = canonical_ensemble(u, beta, guard)
    return beta * exact_expectation(u, q, guard) - entropy(q) + ensemble.log_partition


def pq_distance(
    u: WorldUtility, q: ProductDistribution, beta: float, guard: int | None = None
) -> float:
    """KL(p^beta || q)."""
    ensemble = canonical_ensemble(u, beta, guard)
    return float(np.sum(rel_entr(ensemble.probs, joint_probabilities(q, guard))))
