from app.services.distribution import ProductDistribution
from app.services.variants import klpq_exponential_step, klpq_threshold_step
from app.updaters.base import StepContext, UpdateRule


class KlpqThresholdRule(UpdateRule):
    name = "klpq-threshold"
    version = "v1"
    stops_on_gradient = False

    def step(self, q: ProductDistribution, ctx: StepContext) -> ProductDistribution:
        return klpq_threshold_step(
            q,
            ctx.anneal.threshold,
            utility=ctx.utility if ctx.exact else None,
            samples=ctx.samples,
            eps_floor=ctx.descent.eps_floor,
        )


class KlpqExponentialRule(UpdateRule):
    name = "klpq-exponential"
    version = "v1"
    stops_on_gradient = False

    def step(self, q: ProductDistribution, ctx: StepContext) -> ProductDistribution:
        return klpq_exponential_step(
            q,
            ctx.beta,
            utility=ctx.utility if ctx.exact else None,
            samples=ctx.samples,
            eps_floor=ctx.descent.eps_floor,
        )
