"""
Desk-scale benchmark suites. Each suite returns a pandas DataFrame, one row per measurement.
"""

from __future__ import annotations

import logging
from typing import Callable

import numpy as np
import pandas as pd

from app.core.errors import InvalidParameterError, NoCoverageError
from app.core.random import RandomSource
from app.schemas.config import ProblemSpec, RunConfig, ScheduleConfig
from app.services.distribution import ProductDistribution
from app.services.montecarlo import MonteCarloEstimator, estimate_bits, run_block
from app.services.oracle import exact_conditionals, global_minimum
from app.services.problems import generate_problem
from app.services.run_service import RunService
from app.services.utility import PrivateUtilitySet
from app.services.variants import exact_bits, exact_percentile_threshold

logger = logging.getLogger(__name__)

SUITES: dict[str, Callable[..., pd.DataFrame]] = {}


def register(name: str):
    def deco(fn: Callable[..., pd.DataFrame]) -> Callable[..., pd.DataFrame]:
        SUITES[name] = fn
        return fn

    return deco


@register("end-to-end")
def end_to_end(
    problems: int = 20,
    agents: int = 4,
    moves: int = 4,
    modes: tuple[str, ...] = ("exact", "monte-carlo"),
    schedule: ScheduleConfig | None = None,
    samples_per_step: int = 8,
) -> pd.DataFrame:
    """Annealed gradient descent on seeded random tables.

    hit: the best sampled joint move is a global minimum. modal_hit: so is the most likely
    joint move of the final q. The default schedule anneals beta from 0.1 to 204.8.
    """
    schedule = schedule or ScheduleConfig(rounds=12)
    rows = []
    for seed in range(problems):
        problem = ProblemSpec(
            generator="random-table", params={"agents": agents, "moves": moves}, seed=seed
        )
        u, _ = generate_problem(problem.generator, problem.params, problem.seed)
        _, g_min = global_minimum(u)
        for mode in modes:
            cfg = RunConfig(
                problem=problem,
                algorithm="gradient",
                expectation_mode=mode,
                schedule=schedule,
                block_length=200,
                kappa_age=1.0,
                samples_per_step=samples_per_step,
                seed=seed,
            )
            result = RunService().run(cfg)
            summary = result.summary
            modal_g = u.evaluate(result.final_q.modal_moves())
            rows.append(
                {
                    "seed": seed,
                    "mode": mode,
                    "best_g": summary.best_g,
                    "optimum_g": g_min,
                    "hit": summary.best_g <= g_min,
                    "modal_hit": modal_g <= g_min,
                    "evaluations": summary.evaluations,
                }
            )
            logger.info("seed %d %s best G=%.6g optimum=%.6g", seed, mode, summary.best_g, g_min)
    return pd.DataFrame(rows)


@register("bit-variance")
def bit_variance(
    problems: int = 10,
    agents: int = 3,
    moves: int = 3,
    block_length: int = 200,
    repeats: int = 50,
    threshold_pct: float = 0.5,
) -> pd.DataFrame:
    """Spread of the bit estimator vs the G estimator, each normalized by its squared range.

    K sits at the median of G under uniform q.
    """
    rows = []
    for seed in range(problems):
        u, domain = generate_problem("random-table", {"agents": agents, "moves": moves}, seed)
        utilities = PrivateUtilitySet(u)
        q = ProductDistribution.uniform(domain.move_counts)
        table = u.table()
        g_range = float(table.max() - table.min())
        threshold = exact_percentile_threshold(u, q, threshold_pct)
        rng = RandomSource(seed, stream=7)
        g_est, bit_est = [], []
        for k in range(repeats):
            stats, batch = run_block(q, utilities, block_length, rng, block=k)
            try:
                bits = estimate_bits(batch, threshold, domain.move_counts)
            except NoCoverageError:
                continue
            g_est.append(np.concatenate(stats.means))
            bit_est.append(np.concatenate(bits))
        if len(g_est) < 2:
            raise InvalidParameterError("too few covered blocks to estimate a variance")
        g_var = float(np.mean(np.var(g_est, axis=0, ddof=1))) / g_range**2
        bit_var = float(np.mean(np.var(bit_est, axis=0, ddof=1)))
        g_bias = np.mean(g_est, axis=0) - np.concatenate(exact_conditionals(u, q))
        bit_bias = np.mean(bit_est, axis=0) - np.concatenate(exact_bits(u, q, threshold))
        rows.append(
            {
                "seed": seed,
                "g_variance": g_var,
                "bit_variance": bit_var,
                "ratio": bit_var / g_var if g_var > 0 else np.inf,
                "g_bias": float(np.max(np.abs(g_bias))) / g_range,
                "bit_bias": float(np.max(np.abs(bit_bias))),
            }
        )
    return pd.DataFrame(rows)


@register("aging")
def aging(
    block_lengths: tuple[int, ...] = (25, 50, 100, 200, 400, 800),
    kappa_age: float = 1.0,
    blocks: int = 40,
    agents: int = 3,
    moves: int = 3,
    seed: int = 0,
) -> pd.DataFrame:
    """RMS error of the aged estimate against the exact conditionals at a fixed q."""
    u, domain = generate_problem("random-table", {"agents": agents, "moves": moves}, seed)
    utilities = PrivateUtilitySet(u)
    q = ProductDistribution.uniform(domain.move_counts)
    truth = np.concatenate(exact_conditionals(u, q))
    rows = []
    for length in block_lengths:
        estimator = MonteCarloEstimator(
            utilities, length, kappa_age, RandomSource(seed, stream=length)
        )
        errors = []
        for _ in range(blocks):
            estimator.advance(q)
            est = np.concatenate(estimator.accumulator.estimates())
            errors.append(np.sqrt(np.mean((est - truth) ** 2)))
        rms = float(np.sqrt(np.mean(np.square(errors))))
        rows.append({"block_length": length, "rms": rms, "rms_sqrt_l": rms * np.sqrt(length)})
    return pd.DataFrame(rows)


def run_suite(name: str, **params) -> pd.DataFrame:
    if name not in SUITES:
        raise InvalidParameterError(f"unknown bench suite {name!r}; known: {sorted(SUITES)}")
    logger.info("running bench suite %s", name)
    return SUITES[name](**params)
