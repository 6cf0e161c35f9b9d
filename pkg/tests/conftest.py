import numpy as np
import pytest

from app.core.random import RandomSource
from app.services.distribution import ProductDistribution
from app.services.lagrangian import ExactExpectationSource
from app.services.problems import congestion_table, sum_table
from app.services.utility import TableUtility


@pytest.fixture
def p0():
    """Two agents, two moves, G(x1, x2) = x1 + x2."""
    return sum_table({"agents": 2, "moves": 2}, seed=0)


@pytest.fixture
def p0_src(p0):
    return ExactExpectationSource(p0)


@pytest.fixture
def uniform22():
    return ProductDistribution.uniform([2, 2])


@pytest.fixture
def congestion():
    return congestion_table({"agents": 2, "moves": 2, "costs": [0.0, 5.0]}, seed=0)


@pytest.fixture
def rng():
    return RandomSource(1234)


@pytest.fixture
def random_tables():
    def make(count: int, shape=(3, 3, 3), seed: int = 0):
        gen = np.random.default_rng(seed)
        return [TableUtility(gen.random(shape)) for _ in range(count)]

    return make


@pytest.fixture
def run_config_doc():
    def make(**overrides):
        doc = {
            "problem": {"generator": "sum", "params": {"agents": 2, "moves": 2}},
            "algorithm": "gradient",
            "schedule": {"beta0": 1.0, "beta_growth": 2.0, "inner_steps": 50, "rounds": 2},
            "seed": 3,
        }
        doc.update(overrides)
        return doc

    return make
