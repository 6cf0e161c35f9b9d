from app.services.descent import nearest_newton_step
from app.services.distribution import ProductDistribution
from app.updaters.base import StepContext, UpdateRule


class NearestNewtonRule(UpdateRule):
    name = "nearest-newton"
    version = "v1"

    def step(self, q: ProductDistribution, ctx: StepContext) -> ProductDistribution:
        return nearest_newton_step(q, ctx.src, ctx.beta, ctx.descent)
