from app.core.errors import UnknownAlgorithmError
from app.updaters.base import UpdateRule
from app.updaters.brouwer import BrouwerRule
from app.updaters.gradient import GradientRule
from app.updaters.klpq import KlpqExponentialRule, KlpqThresholdRule
from app.updaters.nearest_newton import NearestNewtonRule
from app.updaters.threshold import ThresholdGradientRule


def available_rules() -> dict[str, UpdateRule]:
    rules: list[UpdateRule] = [
        GradientRule(),
        NearestNewtonRule(),
        BrouwerRule(),
        ThresholdGradientRule(),
        KlpqThresholdRule(),
        KlpqExponentialRule(),
    ]
    return {r.name: r for r in rules}


def get_rule(name: str) -> UpdateRule:
    rules = available_rules()
    if name not in rules:
        raise UnknownAlgorithmError(f"unknown algorithm {name!r}; known: {sorted(rules)}")
    return rules[name]
