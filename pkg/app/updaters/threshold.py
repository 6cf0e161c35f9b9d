from app.services.distribution import ProductDistribution
from app.services.montecarlo import estimate_bits
from app.services.variants import exact_bits, threshold_gradient_step
from app.updaters.base import StepContext, UpdateRule


class ThresholdGradientRule(UpdateRule):
    """Gradient step on the single-bit Lagrangian: E(G) replaced by P(G > K)."""

    name = "threshold-gradient"
    version = "v1"
    stops_on_gradient = False

    def step(self, q: ProductDistribution, ctx: StepContext) -> ProductDistribution:
        v = ctx.variant
        threshold = ctx.anneal.threshold
        if ctx.samples is not None:
            bits = estimate_bits(
                ctx.samples, threshold, q.move_counts, v.smoothing, v.logistic_scale
            )
        else:
            bits = exact_bits(ctx.utility, q, threshold, v.smoothing, v.logistic_scale)
        return threshold_gradient_step(
            q, bits, ctx.beta, ctx.descent.alpha, ctx.descent.eps_floor
        )
