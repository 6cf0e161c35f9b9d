"""
Simplex-projected steepest descent and Nearest Newton descent of the maxent Lagrangian.

Each agent's update reads only its own conditional costs and its own q_i, so a step is a
barrier: all agents read the pre-step q, then all write.
"""

from __future__ import annotations

import logging
import math
from typing import Sequence

import numpy as np
from scipy.special import rel_entr

from app.core.errors import DegenerateConstraintsError, StepCollapseError
from app.schemas.config import DescentConfig
from app.services.distribution import ProductDistribution, agent_entropy, project_interior
from app.services.lagrangian import ExpectationSource
from app.services.oracle import exact_expectation, joint_probabilities
from app.services.utility import WorldUtility, check_guard

logger = logging.getLogger(__name__)


def constrained_steepest_direction(
    gradient: Sequence[float] | np.ndarray,
    constraint_gradients: Sequence[Sequence[float] | np.ndarray],
) -> np.ndarray:
    """u = grad V + sum_k lambda_k grad f_k with u . grad f_k = 0 for every k (unnormalized)."""
    g = np.asarray(gradient, dtype=float)
    if len(constraint_gradients) == 0:
        return g.copy()
    a = np.atleast_2d(np.asarray(constraint_gradients, dtype=float))
    gram = a @ a.T
    if np.linalg.matrix_rank(a) < a.shape[0]:
        raise DegenerateConstraintsError("constraint gradients are linearly dependent")
    try:
        lam = np.linalg.solve(gram, a @ g)
    except np.linalg.LinAlgError as exc:
        raise DegenerateConstraintsError(str(exc)) from exc
    return g - a.T @ lam


def _u_vectors(q: ProductDistribution, src: ExpectationSource, beta: float) -> list[np.ndarray]:
    return [beta * c + np.log(p) for p, c in zip(q.probs, src.conditionals(q))]


def projected_gradient(
    q: ProductDistribution, src: ExpectationSource, beta: float
) -> list[np.ndarray]:
    """dL/dq_i(j) = u_i(j) - mean_j' u_i(j'), with u_i(j) = beta E(G | x_i=j) + ln q_i(j)."""
    return [
        constrained_steepest_direction(u, [np.ones_like(u)]) for u in _u_vectors(q, src, beta)
    ]


def gradient_norm(q: ProductDistribution, src: ExpectationSource, beta: float) -> float:
    return float(np.sqrt(sum(float(d @ d) for d in projected_gradient(q, src, beta))))


def _bounded_step(
    q: ProductDistribution, directions: list[np.ndarray], cfg: DescentConfig
) -> ProductDistribution:
    alpha = cfg.alpha
    for attempt in range(cfg.max_backtracks + 1):
        raw = [p - alpha * d for p, d in zip(q.probs, directions)]
        if all(np.all(v >= 0) for v in raw):
            return project_interior(raw, cfg.eps_floor)
        if attempt < cfg.max_backtracks:
            alpha *= 0.5
    if cfg.on_boundary == "raise":
        raise StepCollapseError(
            f"step still leaves the simplex after {cfg.max_backtracks} backtracks (alpha={alpha:g})"
        )
    logger.debug("boundary step clipped at alpha=%g", alpha)
    return project_interior(raw, cfg.eps_floor)


def gradient_step(
    q: ProductDistribution, src: ExpectationSource, beta: float, cfg: DescentConfig
) -> ProductDistribution:
    return _bounded_step(q, projected_gradient(q, src, beta), cfg)


def nearest_newton_full_jump(
    q: ProductDistribution, src: ExpectationSource, beta: float
) -> list[np.ndarray]:
    """q*_i(j) = q_i(j) [1 - S(q_i) - ln q_i(j) - beta (E(G|x_i=j) - E(G))].

    The jump may leave the simplex.
    """
    costs = src.conditionals(q)
    jumps = []
    for p, c in zip(q.probs, costs):
        # agent-consistent E(G) keeps sum_j q*_i(j) = 1 for private utilities too
        mean = float(p @ c)
        jumps.append(p * (1.0 - agent_entropy(p) - np.log(p) - beta * (c - mean)))
    return jumps


def nearest_newton_step(
    q: ProductDistribution, src: ExpectationSource, beta: float, cfg: DescentConfig
) -> ProductDistribution:
    """Move q toward q* by the largest eta in {1, rho, rho^2, ...} that stays interior."""
    target = nearest_newton_full_jump(q, src, beta)
    eta = 1.0
    for _ in range(cfg.max_backtracks + 1):
        cand = [p + eta * (t - p) for p, t in zip(q.probs, target)]
        if all(np.all(v >= cfg.eps_floor) for v in cand):
            return project_interior(cand, cfg.eps_floor)
        eta *= cfg.boundary_shrink
    logger.debug("nearest newton jump clipped at eta=%g", eta / cfg.boundary_shrink)
    return project_interior(cand, cfg.eps_floor)


def nearest_newton_jump_gap(
    u: WorldUtility, q: ProductDistribution, beta: float, guard: int | None = None
) -> float:
    """pq-KL distance from the joint Newton target p* to the product of its marginals."""
    check_guard(u.domain, guard)
    table = u.table(guard)
    p0 = joint_probabilities(q, guard)
    s0 = float(-np.sum(p0 * np.log(p0)))
    p_star = p0 * (1.0 - s0 - np.log(p0) - beta * (table - exact_expectation(u, q, guard)))
    if np.any(p_star < 0):
        return math.inf
    n = p_star.ndim
    marginals = [p_star.sum(axis=tuple(k for k in range(n) if k != i)) for i in range(n)]
    operands: list = []
    for k, m in enumerate(marginals):
        operands += [m, [k]]
    product = np.einsum(*operands, list(range(n)))
    return float(np.sum(rel_entr(p_star, product)))


def hessian2x2_eigenvalues(s: float, t: float, alpha_c: float) -> tuple[float, float]:
    root = math.sqrt(4 * alpha_c**2 + (s - t) ** 2)
    return (s + t + root) / 2, (s + t - root) / 2
