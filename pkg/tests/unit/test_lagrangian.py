import math

import numpy as np
import pytest

from app.core.errors import BetaDecreaseError, InvalidParameterError
from app.services.descent import projected_gradient
from app.services.distribution import ProductDistribution, entropy
from app.services.lagrangian import (
    AnnealState,
    ExactExpectationSource,
    boltzmann_residual,
    boltzmann_response,
    brouwer_step,
    iterate_brouwer,
    maxent_lagrangian,
    response_expected_cost,
    response_variance,
)


def test_lagrangian_values(p0_src, uniform22):
    assert maxent_lagrangian(uniform22, p0_src, 1.0) == pytest.approx(1.0 - 2 * math.log(2))
    q = ProductDistribution([[0.3, 0.7], [0.6, 0.4]])
    assert maxent_lagrangian(q, p0_src, 0.0) == pytest.approx(-entropy(q))
    corner = ProductDistribution.point_mass([2, 2], (0, 0))
    assert maxent_lagrangian(corner, p0_src, 1.0) == 0.0


def test_boltzmann_response(p0_src, uniform22):
    assert boltzmann_response(uniform22, p0_src, 0, 0.0) == pytest.approx([0.5, 0.5])
    assert boltzmann_response(uniform22, p0_src, 0, 1.0) == pytest.approx(
        [0.731059, 0.268941], abs=1e-6
    )
    hot = boltzmann_response(uniform22, p0_src, 0, 100.0)
    assert hot[0] == pytest.approx(1.0)
    assert hot[1] == pytest.approx(3.7e-44, rel=0.01)


def test_brouwer_full_step(p0_src, uniform22):
    q = ProductDistribution([[0.9, 0.1], [0.2, 0.8]])
    assert brouwer_step(q, p0_src, 0.0, mix=1.0).max_abs_diff(uniform22) < 1e-15
    nxt = brouwer_step(uniform22, p0_src, 1.0, mix=1.0)
    assert nxt[0][0] == pytest.approx(0.731059, abs=1e-6)
    assert nxt[1][0] == pytest.approx(0.731059, abs=1e-6)


def test_brouwer_mixing(p0_src, uniform22):
    half = brouwer_step(uniform22, p0_src, 1.0)
    assert half[0][0] == pytest.approx(0.5 * 0.5 + 0.5 * 0.731059, abs=1e-6)
    with pytest.raises(InvalidParameterError):
        brouwer_step(uniform22, p0_src, 1.0, mix=0.0)


def test_brouwer_fixed_point(p0_src, uniform22):
    q, iterations = iterate_brouwer(uniform22, p0_src, 1.0, mix=1.0)
    assert iterations < 10_000
    assert boltzmann_residual(q, p0_src, 1.0) < 1e-10


def test_response_zeroes_agent_gradient(random_tables):
    gen = np.random.default_rng(11)
    for u in random_tables(20):
        src = ExactExpectationSource(u)
        q = ProductDistribution([gen.dirichlet(np.ones(3)) for _ in range(3)])
        for i in range(3):
            qi = q.replace(i, boltzmann_response(q, src, i, 1.3))
            grad = projected_gradient(qi, src, 1.3)[i]
            assert np.linalg.norm(grad) < 1e-8


@pytest.mark.parametrize("beta", [0.0, 0.5, 1.0, 2.0])
def test_variance_identity(p0_src, uniform22, beta):
    h = 1e-4
    slope = (
        response_expected_cost(uniform22, p0_src, 0, beta + h)
        - response_expected_cost(uniform22, p0_src, 0, beta - h)
    ) / (2 * h)
    variance = response_variance(uniform22, p0_src, 0, beta)
    assert slope == pytest.approx(-variance, rel=1e-4)
    if beta == 0.0:
        assert variance == pytest.approx(0.25)


def test_anneal_state():
    state = AnnealState(beta=0.5)
    assert state.anneal(2.0) == 1.0
    assert state.outer_round == 1
    with pytest.raises(BetaDecreaseError):
        state.advance_beta(0.9)
    with pytest.raises(InvalidParameterError):
        AnnealState(beta=1.0, kappa_pct=0.0)
    with pytest.raises(InvalidParameterError):
        AnnealState(beta=1.0, alpha=0.0)
