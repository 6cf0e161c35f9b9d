from app.services.descent import gradient_step
from app.services.distribution import ProductDistribution
from app.updaters.base import StepContext, UpdateRule


class GradientRule(UpdateRule):
    name = "gradient"
    version = "v1"

    def step(self, q: ProductDistribution, ctx: StepContext) -> ProductDistribution:
        return gradient_step(q, ctx.src, ctx.beta, ctx.descent)
