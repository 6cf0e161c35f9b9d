from __future__ import annotations

from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.core.settings import settings

Algorithm = Literal[
    "gradient",
    "nearest-newton",
    "brouwer",
    "threshold-gradient",
    "klpq-threshold",
    "klpq-exponential",
]
VariantKind = Literal[
    "percentile", "transform", "threshold-gradient", "klpq-threshold", "klpq-exponential"
]
VARIANT_ALGORITHMS = ("threshold-gradient", "klpq-threshold", "klpq-exponential")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DescentConfig(_Strict):
    alpha: float = Field(0.05, gt=0)
    boundary_shrink: float = Field(0.5, gt=0, lt=1)
    max_backtracks: int = Field(8, ge=0)
    eps_floor: float = Field(default_factory=lambda: settings.eps_floor, gt=0, lt=1)
    on_boundary: Literal["clip", "raise"] = "clip"


class VariantConfig(_Strict):
    kind: VariantKind | None = None
    kappa_pct: float = Field(0.25, gt=0, le=1)
    threshold: float | None = None  # fixed K; None derives K from threshold_pct each block
    threshold_pct: float = Field(0.25, gt=0, le=1)
    smoothing: Literal["heaviside", "logistic"] = "heaviside"
    logistic_scale: float = Field(1.0, gt=0)
    transform: Literal["identity", "exponential", "linear"] = "exponential"
    transform_params: dict[str, float] = Field(default_factory=dict)
    stall_patience: int = Field(10, ge=1)
    transform_hold: int = Field(10, ge=1)


class TableSpec(_Strict):
    move_counts: list[int]
    values: list[float]


class ProblemSpec(_Strict):
    table: TableSpec | None = None
    table_path: str | None = None
    generator: str | None = None
    params: dict[str, Any] = Field(default_factory=dict)
    seed: int = 0

    @model_validator(mode="after")
    def _one_source(self) -> "ProblemSpec":
        given = [s for s in (self.table, self.table_path, self.generator) if s is not None]
        if len(given) != 1:
            raise ValueError("problem needs exactly one of table, table_path, generator")
        return self


class ScheduleConfig(_Strict):
    beta0: float = Field(0.1, ge=0)
    beta_growth: float = Field(2.0, ge=1)
    inner_steps: int = Field(200, ge=1)
    rounds: int = Field(8, ge=0)
    tolerance: float = Field(1e-6, gt=0)


class RunConfig(_Strict):
    problem: ProblemSpec
    algorithm: Algorithm = "gradient"
    expectation_mode: Literal["exact", "monte-carlo"] = "exact"
    descent: DescentConfig = Field(default_factory=DescentConfig)
    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)
    block_length: int = Field(200, ge=0)
    kappa_age: float = Field(1.0, ge=0)
    n_force: int = Field(3, ge=1)
    brouwer_mix: float = Field(0.5, gt=0, le=1)
    variant: VariantConfig = Field(default_factory=VariantConfig)
    private_utility: Literal["team", "difference"] = "team"
    init_jitter: float = Field(1e-3, ge=0)
    initial_q: list[list[float]] | None = None
    samples_per_step: int = Field(1, ge=0)
    workers: int = Field(1, ge=1)
    sample_log: bool = False
    out_dir: str | None = None
    seed: int = 0

    @model_validator(mode="after")
    def _variant_matches_algorithm(self) -> "RunConfig":
        if self.algorithm in VARIANT_ALGORITHMS:
            if self.variant.kind is None:
                self.variant = self.variant.model_copy(update={"kind": self.algorithm})
            elif self.variant.kind != self.algorithm:
                raise ValueError(
                    f"variant kind {self.variant.kind!r} conflicts with "
                    f"algorithm {self.algorithm!r}"
                )
        elif self.variant.kind in VARIANT_ALGORITHMS:
            raise ValueError(f"variant kind {self.variant.kind!r} needs algorithm of the same name")
        return self

    @model_validator(mode="after")
    def _sampling_has_blocks(self) -> "RunConfig":
        if self.expectation_mode == "monte-carlo" and self.block_length < 1:
            raise ValueError("monte-carlo mode needs block_length >= 1")
        return self
