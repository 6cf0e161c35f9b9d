from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

from app.schemas.config import DescentConfig, VariantConfig
from app.services.distribution import ProductDistribution
from app.services.lagrangian import AnnealState, ExpectationSource
from app.services.montecarlo import SampleBatch
from app.services.utility import WorldUtility


@dataclass
class StepContext:
    src: ExpectationSource
    anneal: AnnealState
    descent: DescentConfig
    variant: VariantConfig
    utility: WorldUtility | None = None  # set in exact mode
    samples: SampleBatch | None = None  # latest block in Monte-Carlo mode
    brouwer_mix: float = 0.5

    @property
    def beta(self) -> float:
        return self.anneal.beta

    @property
    def exact(self) -> bool:
        return self.samples is None


class UpdateRule(ABC):
    name: str = "base"
    version: str = "v1"
    # maxent rules stop a round on the projected gradient of L, the others on the change in q
    stops_on_gradient: bool = True

    @abstractmethod
    def step(self, q: ProductDistribution, ctx: StepContext) -> ProductDistribution: ...
