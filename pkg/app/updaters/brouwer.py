from app.services.distribution import ProductDistribution, project_interior
from app.services.lagrangian import brouwer_step
from app.updaters.base import StepContext, UpdateRule


class BrouwerRule(UpdateRule):
    name = "brouwer"
    version = "v1"

    def step(self, q: ProductDistribution, ctx: StepContext) -> ProductDistribution:
        nxt = brouwer_step(q, ctx.src, ctx.beta, ctx.brouwer_mix)
        return project_interior(nxt, ctx.descent.eps_floor)
