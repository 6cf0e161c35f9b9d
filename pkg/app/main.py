"""
Command-line entry point: `pdopt run|oracle|bench`.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from pydantic import ValidationError

from app.core.errors import PDError, RunAbortedError
from app.core.logging import configure_logging
from app.core.settings import settings
from app.schemas.config import RunConfig
from app.services.bench_service import SUITES, run_suite
from app.services.distribution import ProductDistribution, entropy
from app.services.lagrangian import ExactExpectationSource, maxent_lagrangian
from app.services.oracle import canonical_marginals, global_minimum
from app.services.run_service import RunService, build_problem

logger = logging.getLogger(__name__)

EXIT_MODULE_ERROR = 1
EXIT_BAD_INPUT = 2


def load_config(path: str | Path) -> RunConfig:
    return RunConfig.model_validate_json(Path(path).read_text(encoding="utf-8"))


def _cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    update: dict = {}
    if args.seed is not None:
        update["seed"] = args.seed
    if args.out is not None:
        update["out_dir"] = args.out
    elif config.out_dir is None:
        update["out_dir"] = settings.output_dir
    config = config.model_copy(update=update)

    svc = RunService()
    svc.set_progress_callback(lambda pct, msg: logger.debug("%5.1f%% %s", pct, msg))
    try:
        result = svc.run(config)
    except RunAbortedError as exc:
        logger.error("run aborted; %d partial trace rows in %s", len(exc.trace), config.out_dir)
        raise
    print(result.summary.model_dump_json(indent=2))
    return 0


def _cmd_oracle(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    u = build_problem(config.problem)
    x, g = global_minimum(u)
    beta = config.schedule.beta0
    q = (
        ProductDistribution(config.initial_q)
        if config.initial_q is not None
        else ProductDistribution.uniform(u.domain.move_counts)
    )
    src = ExactExpectationSource(u)
    doc = {
        "move_counts": list(u.domain.move_counts),
        "joint_size": u.domain.joint_size,
        "beta": beta,
        "q": q.to_list(),
        "expected_g": src.expectation(q),
        "entropy": entropy(q),
        "lagrangian": maxent_lagrangian(q, src, beta),
        "canonical_marginals": canonical_marginals(u, beta).to_list(),
        "best_x": list(x),
        "best_g": g,
    }
    print(json.dumps(doc, indent=2))
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    table = run_suite(args.suite)
    print(table.to_json(orient="records", indent=2))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        table.to_json(out / f"bench-{args.suite}.json", orient="records", indent=2)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pdopt",
        description="Product-distribution optimization of a team utility over categorical moves.",
    )
    parser.add_argument("--log-level", default=None, help="overrides PD_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="anneal a product distribution and write the trace")
    run.add_argument("--config", required=True, help="RunConfig JSON document")
    run.add_argument("--seed", type=int, default=None, help="overrides the config's master seed")
    run.add_argument("--out", default=None, help="output directory for trace.jsonl/summary.json")
    run.set_defaults(handler=_cmd_run)

    oracle = sub.add_parser("oracle", help="exact global minimum and canonical marginals")
    oracle.add_argument("--config", required=True)
    oracle.set_defaults(handler=_cmd_oracle)

    bench = sub.add_parser("bench", help="run a benchmark suite and print a JSON table")
    bench.add_argument("--suite", required=True, choices=sorted(SUITES))
    bench.add_argument("--out", default=None)
    bench.set_defaults(handler=_cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.handler(args)
    except (ValidationError, FileNotFoundError, json.JSONDecodeError) as exc:
        logger.error("invalid input: %s", exc)
        return EXIT_BAD_INPUT
    except PDError as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return EXIT_MODULE_ERROR


if __name__ == "__main__":
    sys.exit(main())
