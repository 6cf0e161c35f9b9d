import json

import numpy as np
import pytest

from app.core.errors import RunAbortedError
from app.repositories.trace_repo import TraceRepository
from app.schemas.config import RunConfig
from app.services.descent import gradient_step
from app.services.distribution import ProductDistribution
from app.services.lagrangian import ExactExpectationSource
from app.services.problems import SymmetryMap, apply_symmetry
from app.services.run_service import RunService


def _run(doc):
    return RunService().run(RunConfig.model_validate(doc))


def test_p0_converges_to_global_minimum(run_config_doc):
    doc = run_config_doc(
        descent={"alpha": 0.05},
        schedule={"beta0": 1.0, "beta_growth": 2.0, "inner_steps": 200, "rounds": 6},
    )
    result = _run(doc)
    assert result.final_q[0][0] >= 0.99
    assert result.final_q[1][0] >= 0.99
    assert result.summary.best_x == [0, 0]
    assert result.summary.best_g == 0.0
    assert result.trace[-1].modal_x == [0, 0]


def test_trace_columns_are_monotone(run_config_doc):
    trace = _run(run_config_doc()).trace
    best = [row.best_g for row in trace]
    betas = [row.beta for row in trace]
    assert best == sorted(best, reverse=True)
    assert betas == sorted(betas)
    keys = [(row.round, row.step) for row in trace]
    assert keys == sorted(keys)
    assert len(set(keys)) == len(keys)


@pytest.mark.parametrize(
    "mode, expected_evaluations", [("exact", 5), ("monte-carlo", 30)]
)
def test_zero_rounds_gives_initial_row(run_config_doc, mode, expected_evaluations):
    doc = run_config_doc(
        schedule={"rounds": 0}, expectation_mode=mode, block_length=30, samples_per_step=5
    )
    result = _run(doc)
    assert len(result.trace) == 1
    row = result.trace[0]
    assert (row.round, row.step) == (0, 0)
    assert result.summary.best_g == row.best_g
    # exact mode never draws a Monte-Carlo block up front
    assert result.summary.evaluations == expected_evaluations
    assert result.summary.rounds == 0


def test_congestion_has_two_symmetric_equilibria():
    qa = [[0.6, 0.4], [0.4, 0.6]]
    base = {
        "problem": {
            "generator": "congestion",
            "params": {"agents": 2, "moves": 2, "costs": [0.0, 5.0]},
        },
        "schedule": {"beta0": 1.0, "beta_growth": 2.0, "inner_steps": 200, "rounds": 6},
        "init_jitter": 0.0,
    }
    swap = SymmetryMap.shared_swap(2, 2)
    qb = apply_symmetry(ProductDistribution(qa), swap).to_list()
    a = _run({**base, "initial_q": qa})
    b = _run({**base, "initial_q": qb})
    assert a.summary.best_g == 0.0
    assert b.summary.best_g == 0.0
    assert apply_symmetry(a.final_q, swap).max_abs_diff(b.final_q) < 1e-6
    assert a.final_q.modal_moves() != b.final_q.modal_moves()


def test_swapped_equilibrium_is_stationary(congestion):
    qa = ProductDistribution([[0.6, 0.4], [0.4, 0.6]])
    base = {
        "problem": {
            "generator": "congestion",
            "params": {"agents": 2, "moves": 2, "costs": [0.0, 5.0]},
        },
        "schedule": {"beta0": 1.0, "beta_growth": 2.0, "inner_steps": 200, "rounds": 6},
        "init_jitter": 0.0,
        "initial_q": qa.to_list(),
    }
    cfg = RunConfig.model_validate(base)
    result = RunService().run(cfg)
    beta = result.trace[-1].beta
    swap = SymmetryMap.shared_swap(2, 2)
    target = apply_symmetry(result.final_q, swap)
    q = target
    src = ExactExpectationSource(congestion)
    for _ in range(100):
        q = gradient_step(q, src, beta, cfg.descent)
    assert q.max_abs_diff(target) < 1e-6


def test_runs_are_reproducible(tmp_path, run_config_doc):
    for mode in ("exact", "monte-carlo"):
        doc = run_config_doc(expectation_mode=mode, block_length=40)
        first = _run({**doc, "out_dir": str(tmp_path / mode / "a")})
        second = _run({**doc, "out_dir": str(tmp_path / mode / "b")})
        a = (tmp_path / mode / "a" / "trace.jsonl").read_bytes()
        b = (tmp_path / mode / "b" / "trace.jsonl").read_bytes()
        assert a == b
        assert first.summary.best_x == second.summary.best_x


def test_seed_changes_the_trace(run_config_doc):
    a = _run(run_config_doc(seed=1)).trace
    b = _run(run_config_doc(seed=2)).trace
    assert a[0].lagrangian != b[0].lagrangian


def test_outputs_are_written(tmp_path, run_config_doc):
    doc = run_config_doc(out_dir=str(tmp_path))
    result = _run(doc)
    repo = TraceRepository(tmp_path)
    frame = repo.read_trace()
    assert len(frame) == len(result.trace)
    assert {"round", "step", "beta", "lagrangian", "expected_g", "entropy", "best_g"} <= set(
        frame.columns
    )
    summary = repo.read_summary()
    assert summary.best_x == result.summary.best_x
    assert summary.algorithm == "gradient"
    assert json.loads(repo.summary_path.read_text())["seconds"] >= 0


def test_abort_flushes_partial_trace(tmp_path, run_config_doc):
    doc = run_config_doc(
        descent={"alpha": 10.0, "max_backtracks": 0, "on_boundary": "raise"},
        schedule={"beta0": 50.0, "rounds": 2, "inner_steps": 10},
        out_dir=str(tmp_path),
    )
    with pytest.raises(RunAbortedError) as info:
        _run(doc)
    assert len(info.value.trace) >= 1
    lines = (tmp_path / "trace.jsonl").read_text().splitlines()
    assert len(lines) == len(info.value.trace)


def test_progress_callback(run_config_doc):
    seen = []
    svc = RunService()
    svc.set_progress_callback(lambda pct, msg: seen.append(pct))
    svc.run(RunConfig.model_validate(run_config_doc()))
    assert seen[-1] == 100.0
    assert seen == sorted(seen)


@pytest.mark.parametrize(
    "overrides",
    [
        {"algorithm": "nearest-newton"},
        {"algorithm": "brouwer"},
        {"algorithm": "threshold-gradient"},
        {"algorithm": "klpq-threshold"},
        {"algorithm": "klpq-exponential"},
        {"variant": {"kind": "percentile", "kappa_pct": 0.5}},
        {"variant": {"kind": "transform", "stall_patience": 2, "transform_hold": 3}},
        {"private_utility": "difference"},
        {"expectation_mode": "monte-carlo", "block_length": 50},
        {"expectation_mode": "monte-carlo", "block_length": 50, "workers": 2},
        {"expectation_mode": "monte-carlo", "block_length": 50, "algorithm": "threshold-gradient"},
        {"expectation_mode": "monte-carlo", "block_length": 50, "algorithm": "klpq-threshold"},
        {"expectation_mode": "monte-carlo", "block_length": 50, "algorithm": "klpq-exponential"},
        {"expectation_mode": "monte-carlo", "block_length": 50, "variant": {"kind": "percentile"}},
        {
            "expectation_mode": "monte-carlo",
            "block_length": 50,
            "variant": {"kind": "transform", "stall_patience": 2},
        },
    ],
)
def test_every_algorithm_concentrates_on_p0_minimum(run_config_doc, overrides):
    result = _run(run_config_doc(**overrides))
    start = result.trace[0]
    assert start.entropy == pytest.approx(2 * np.log(2), abs=1e-4)
    assert result.final_q[0][0] > 0.8
    assert result.final_q[1][0] > 0.8
    assert result.trace[-1].modal_x == [0, 0]
    assert result.summary.best_x == [0, 0]
    assert result.summary.best_g == 0.0
    assert len(result.trace) > 1
    assert all(np.isfinite(row.lagrangian) for row in result.trace)


@pytest.mark.parametrize("algorithm", ["gradient", "threshold-gradient", "klpq-threshold"])
def test_rare_moves_are_forced_under_minimal_forcing(run_config_doc, algorithm):
    doc = run_config_doc(
        algorithm=algorithm,
        expectation_mode="monte-carlo",
        block_length=20,
        n_force=1,
        init_jitter=0.0,
        initial_q=[[0.999, 0.001], [0.999, 0.001]],
        schedule={"rounds": 1, "inner_steps": 10},
    )
    result = _run(doc)
    assert len(result.trace) == 11
    assert all(np.isfinite(row.lagrangian) for row in result.trace)


def test_sample_log(tmp_path, run_config_doc):
    doc = run_config_doc(
        expectation_mode="monte-carlo",
        block_length=10,
        schedule={"rounds": 1, "inner_steps": 3},
        sample_log=True,
        out_dir=str(tmp_path),
    )
    _run(doc)
    lines = (tmp_path / "samples.jsonl").read_text().splitlines()
    records = [json.loads(line) for line in lines]
    assert len(records) >= 30
    assert {r["block"] for r in records} == {0, 1, 2}
    assert all(set(r) == {"block", "x", "G", "forced"} for r in records)
