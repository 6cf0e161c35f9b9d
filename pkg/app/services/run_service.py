from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from app.core.errors import InvalidDistributionError, PDError, RunAbortedError
from app.core.random import RandomSource
from app.core.settings import settings
from app.repositories.sample_log_repo import SampleLogRepository
from app.repositories.trace_repo import TraceRepository
from app.schemas.config import ProblemSpec, RunConfig
from app.schemas.trace import RunSummary, TraceRow
from app.services.descent import gradient_norm
from app.services.distribution import (
    ProductDistribution,
    entropy,
    project_interior,
    sample_moves,
)
from app.services.lagrangian import AnnealState, ExactExpectationSource, ExpectationSource
from app.services.montecarlo import MonteCarloEstimator, SampleBatch
from app.services.problems import generate_problem
from app.services.utility import PrivateUtilitySet, TableUtility, WorldUtility, check_guard
from app.services.variants import (
    PercentileExpectationSource,
    StallDetector,
    exact_percentile_threshold,
    percentile_filter,
    percentile_threshold,
    transform_utility,
)
from app.updaters.base import StepContext
from app.updaters.registry import get_rule

logger = logging.getLogger(__name__)

# RandomSource streams under the master seed
INIT_STREAM = 0
SAMPLE_STREAM = 1
ESTIMATOR_STREAM = 2


@dataclass
class RunResult:
    trace: list[TraceRow]
    summary: RunSummary
    final_q: ProductDistribution


@dataclass
class _BestTracker:
    best_x: tuple[int, ...] | None = None
    best_g: float = math.inf
    evaluations: int = 0

    def observe(self, moves: np.ndarray, values: np.ndarray) -> None:
        if len(values) == 0:
            return
        self.evaluations += len(values)
        k = int(np.argmin(values))
        if values[k] < self.best_g:
            self.best_g = float(values[k])
            self.best_x = tuple(int(m) for m in moves[k])


@dataclass
class _Problem:
    world: WorldUtility
    utilities: PrivateUtilitySet
    transformed: PrivateUtilitySet | None = None
    traceable: bool = False
    sources: dict[str, ExpectationSource] = field(default_factory=dict)


def build_problem(problem: ProblemSpec) -> WorldUtility:
    if problem.table is not None:
        return TableUtility.from_dict(problem.table.model_dump())
    if problem.table_path is not None:
        return TableUtility.from_json(problem.table_path)
    utility, _ = generate_problem(problem.generator, problem.params, problem.seed)
    return utility


def initial_distribution(
    config: RunConfig, move_counts: tuple[int, ...], rng: RandomSource
) -> ProductDistribution:
    if config.initial_q is not None:
        q = ProductDistribution(config.initial_q)
        if q.move_counts != move_counts:
            raise InvalidDistributionError(
                f"initial_q has move counts {q.move_counts}, problem has {move_counts}"
            )
        return q
    q = ProductDistribution.uniform(move_counts)
    if config.init_jitter == 0:
        return q
    noisy = [p + config.init_jitter * rng.uniform(-1.0, 1.0, len(p)) for p in q.probs]
    return project_interior(noisy, config.descent.eps_floor)


class RunService:
    """Annealed equilibration: inner steps at fixed beta, then beta <- beta * growth."""

    def __init__(self):
        self.progress_callback = None

    def set_progress_callback(self, callback: Callable[[float, str], None] | None):
        """Set a callback function for progress updates."""
        self.progress_callback = callback

    def update_progress(self, progress: float, message: str = ""):
        if self.progress_callback:
            self.progress_callback(progress, message)

    def run(self, config: RunConfig) -> RunResult:
        start = time.perf_counter()
        trace: list[TraceRow] = []
        try:
            result = self._run(config, trace, start)
        except PDError as exc:
            logger.error("run aborted after %d trace rows: %s", len(trace), exc)
            if config.out_dir:
                TraceRepository(config.out_dir).write_trace(trace)
            raise RunAbortedError(f"{type(exc).__name__}: {exc}", trace) from exc
        if config.out_dir:
            repo = TraceRepository(config.out_dir)
            repo.write_trace(result.trace)
            repo.write_summary(result.summary)
            logger.info("wrote %s and %s", repo.trace_path, repo.summary_path)
        return result

    def _setup(self, config: RunConfig) -> _Problem:
        world = build_problem(config.problem)
        domain = world.domain
        if config.expectation_mode == "exact":
            check_guard(domain)
        variant = config.variant
        make = PrivateUtilitySet.difference if config.private_utility == "difference" else None

        def private(u: WorldUtility) -> PrivateUtilitySet:
            return make(u) if make is not None else PrivateUtilitySet(u)

        problem = _Problem(
            world=world,
            utilities=private(world),
            traceable=domain.joint_size <= settings.oracle_guard,
        )
        if variant.kind == "transform":
            f = transform_utility(world, variant.transform, variant.transform_params)
            problem.transformed = private(f)
        if problem.traceable:
            problem.sources["trace"] = ExactExpectationSource(problem.utilities)
        if config.expectation_mode == "exact":
            if variant.kind == "percentile":
                problem.sources["plain"] = PercentileExpectationSource(
                    problem.utilities, variant.kappa_pct
                )
            else:
                problem.sources["plain"] = ExactExpectationSource(problem.utilities)
            if problem.transformed is not None:
                problem.sources["transformed"] = ExactExpectationSource(problem.transformed)
        logger.info(
            "problem with move counts %s, joint size %d, %s utilities",
            domain.move_counts,
            domain.joint_size,
            config.private_utility,
        )
        return problem

    def _run(self, config: RunConfig, trace: list[TraceRow], start: float) -> RunResult:
        problem = self._setup(config)
        world = problem.world
        move_counts = world.domain.move_counts
        exact = config.expectation_mode == "exact"
        rule = get_rule(config.algorithm)
        variant = config.variant
        schedule = config.schedule

        init_rng = RandomSource(config.seed, stream=INIT_STREAM)
        sample_rng = RandomSource(config.seed, stream=SAMPLE_STREAM)
        q = initial_distribution(config, move_counts, init_rng)
        anneal = AnnealState(
            beta=schedule.beta0,
            alpha=config.descent.alpha,
            threshold=variant.threshold,
            kappa_pct=variant.kappa_pct,
            kappa_age=config.kappa_age,
            block_length=config.block_length,
        )

        estimator: MonteCarloEstimator | None = None
        if not exact:
            sample_log = (
                SampleLogRepository(config.out_dir)
                if config.sample_log and config.out_dir
                else None
            )
            kappa = variant.kappa_pct
            estimator = MonteCarloEstimator(
                problem.utilities,
                config.block_length,
                config.kappa_age,
                RandomSource(config.seed, stream=ESTIMATOR_STREAM),
                n_force=config.n_force,
                workers=config.workers,
                sample_filter=(
                    (lambda b: percentile_filter(b, kappa))
                    if variant.kind == "percentile"
                    else None
                ),
                on_samples=sample_log.append if sample_log is not None else None,
            )

        tracker = _BestTracker()
        # exact mode samples only what it will draw per step; a block is a Monte-Carlo quantity
        init_size = max(config.samples_per_step, 1)
        if not exact:
            init_size = max(init_size, config.block_length)
        init_moves = sample_moves(q, sample_rng, init_size)
        init_values = world.evaluate_batch(init_moves)
        tracker.observe(init_moves, init_values)

        def row(r: int, s: int, sample_mean: float | None = None) -> TraceRow:
            if "trace" in problem.sources:
                eg = problem.sources["trace"].expectation(q)
            elif estimator is not None and estimator.block >= 0:
                eg = estimator.source.expectation(q)
            else:
                eg = float(sample_mean)
            s_q = entropy(q)
            return TraceRow(
                round=r,
                step=s,
                beta=anneal.beta,
                lagrangian=anneal.beta * eg - s_q,
                expected_g=eg,
                entropy=s_q,
                best_g=tracker.best_g,
                best_x=list(tracker.best_x),
                modal_x=list(q.modal_moves()),
            )

        trace.append(row(0, 0, float(np.mean(init_values))))
        stall = (
            StallDetector(variant.stall_patience, variant.transform_hold)
            if problem.transformed is not None
            else None
        )
        engaged = False

        for r in range(1, schedule.rounds + 1):
            if r > 1:
                anneal.anneal(schedule.beta_growth)
            if stall is not None:
                stall.reset()
                engaged = self._engage(False, engaged, problem, estimator)
            self.update_progress(
                100.0 * (r - 1) / schedule.rounds, f"round {r}, beta={anneal.beta:g}"
            )
            for s in range(1, schedule.inner_steps + 1):
                anneal.iteration += 1
                samples: SampleBatch | None = None
                if estimator is not None:
                    samples = estimator.advance(q)
                    values = (
                        world.evaluate_batch(samples.moves) if engaged else samples.values
                    )
                    tracker.observe(samples.moves, values)
                    src: ExpectationSource = estimator.source
                else:
                    if config.samples_per_step:
                        moves = sample_moves(q, sample_rng, config.samples_per_step)
                        tracker.observe(moves, world.evaluate_batch(moves))
                    src = problem.sources["transformed" if engaged else "plain"]

                if variant.kind in ("threshold-gradient", "klpq-threshold"):
                    if variant.threshold is None:
                        anneal.threshold = (
                            percentile_threshold(samples, variant.threshold_pct)
                            if samples is not None
                            else exact_percentile_threshold(world, q, variant.threshold_pct)
                        )

                ctx = StepContext(
                    src=src,
                    anneal=anneal,
                    descent=config.descent,
                    variant=variant,
                    utility=world if exact else None,
                    samples=samples,
                    brouwer_mix=config.brouwer_mix,
                )
                nxt = rule.step(q, ctx)
                delta = nxt.max_abs_diff(q)
                q = nxt
                trace.append(row(r, s))

                if stall is not None:
                    engaged = self._engage(
                        stall.update(trace[-1].lagrangian), engaged, problem, estimator
                    )
                if exact and not engaged:
                    if rule.stops_on_gradient:
                        done = gradient_norm(q, src, anneal.beta) < schedule.tolerance
                    else:
                        done = delta < schedule.tolerance
                    if done:
                        logger.debug("round %d equilibrated after %d steps", r, s)
                        break
            logger.info(
                "round %d beta=%g E(G)=%.6g best G=%.6g",
                r,
                anneal.beta,
                trace[-1].expected_g,
                tracker.best_g,
            )

        self.update_progress(100.0, "done")
        summary = RunSummary(
            algorithm=rule.name,
            best_x=list(tracker.best_x),
            best_g=tracker.best_g,
            final_q=q.to_list(),
            rounds=schedule.rounds,
            evaluations=tracker.evaluations,
            seconds=time.perf_counter() - start,
        )
        return RunResult(trace=trace, summary=summary, final_q=q)

    @staticmethod
    def _engage(
        want: bool,
        engaged: bool,
        problem: _Problem,
        estimator: MonteCarloEstimator | None,
    ) -> bool:
        if want == engaged:
            return engaged
        if estimator is not None:
            estimator.switch_utilities(problem.transformed if want else problem.utilities)
        logger.debug("utility transform %s", "engaged" if want else "released")
        return want


def run(config: RunConfig) -> RunResult:
    return RunService().run(config)
