import pytest
from pydantic import ValidationError

from app.core.errors import PDError, RunAbortedError, StepCollapseError
from app.core.settings import Settings
from app.schemas.config import DescentConfig, ProblemSpec, RunConfig


def test_settings_defaults_and_env(monkeypatch):
    assert Settings().eps_floor == 1e-9
    assert Settings().oracle_guard == 10_000_000
    monkeypatch.setenv("PD_ORACLE_GUARD", "1000")
    assert Settings().oracle_guard == 1000


def test_problem_needs_exactly_one_source():
    with pytest.raises(ValidationError):
        ProblemSpec()
    with pytest.raises(ValidationError):
        ProblemSpec(generator="sum", table_path="x.json")
    assert ProblemSpec(generator="sum").generator == "sum"


def test_unknown_fields_are_rejected(run_config_doc):
    with pytest.raises(ValidationError):
        RunConfig.model_validate(run_config_doc(temperature=3))


def test_descent_bounds():
    with pytest.raises(ValidationError):
        DescentConfig(alpha=0.0)
    with pytest.raises(ValidationError):
        DescentConfig(boundary_shrink=1.0)


def test_variant_follows_algorithm(run_config_doc):
    cfg = RunConfig.model_validate(run_config_doc(algorithm="klpq-threshold"))
    assert cfg.variant.kind == "klpq-threshold"
    with pytest.raises(ValidationError):
        RunConfig.model_validate(
            run_config_doc(algorithm="klpq-threshold", variant={"kind": "percentile"})
        )
    with pytest.raises(ValidationError):
        RunConfig.model_validate(run_config_doc(variant={"kind": "klpq-exponential"}))
    ok = RunConfig.model_validate(run_config_doc(variant={"kind": "percentile"}))
    assert ok.variant.kappa_pct == 0.25


def test_error_hierarchy():
    assert issubclass(StepCollapseError, PDError)
    err = RunAbortedError("boom", [1, 2])
    assert err.trace == [1, 2]


def test_sampling_settings_that_leave_moves_uncovered_are_rejected(run_config_doc):
    with pytest.raises(ValidationError):
        RunConfig.model_validate(run_config_doc(n_force=0))
    assert RunConfig.model_validate(run_config_doc(n_force=1)).n_force == 1
    with pytest.raises(ValidationError):
        RunConfig.model_validate(run_config_doc(expectation_mode="monte-carlo", block_length=0))
    assert RunConfig.model_validate(run_config_doc(block_length=0)).block_length == 0
