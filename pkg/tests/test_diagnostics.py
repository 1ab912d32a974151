import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from budgetdefer.diagnostics import (
    MAX_OUTCOMES,
    estimate_disagreement_coefficient,
    estimate_slope_asymmetry,
    exhaustive_iw_expectation,
    exhaustive_iw_expectation_single,
    expected_surrogate,
    expected_surrogate_single,
    rho_distance,
    rho_matrix,
    slope_asymmetry_bound,
    slope_asymmetry_ratios,
)
from budgetdefer.linear_model import HypothesisPool, LinearScorer
from budgetdefer.single_stage import SingleStageRecord, iw_estimate_single
from budgetdefer.two_stage import RoundRecord, iw_estimate


def random_pool(rng, R, D, F=2, scale=2.0):
    return HypothesisPool([LinearScorer(rng.normal(0, scale, (D, F)), rng.normal(0, scale, D))
                           for _ in range(R)])


def random_instance(rng, T, M, n_e):
    losses = rng.uniform(0, 1 / n_e, (T, M, n_e))
    costs = rng.integers(0, 2, (T, n_e))
    q = rng.dirichlet(np.ones(n_e))
    p = rng.uniform(0.05, 1.0, (T, n_e))
    return losses, costs, q, p


class TestExhaustiveOracle:
    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2 ** 31 - 1), st.integers(1, 3), st.integers(1, 3), st.integers(1, 3))
    def test_two_stage_matches_closed_form(self, seed, T, M, n_e):
        losses, costs, q, p = random_instance(np.random.default_rng(seed), T, M, n_e)
        np.testing.assert_allclose(exhaustive_iw_expectation(losses, costs, q, p),
                                   expected_surrogate(losses, costs), rtol=0, atol=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2 ** 31 - 1), st.integers(1, 2), st.integers(1, 3), st.integers(1, 3))
    def test_single_stage_matches_closed_form(self, seed, T, M, n_e):
        rng = np.random.default_rng(seed)
        label = rng.uniform(0, 1 / (n_e + 1), (T, M))
        defer = rng.uniform(0, 1 / (n_e + 1), (T, M, n_e))
        costs = rng.integers(0, 2, (T, n_e))
        q = rng.dirichlet(np.ones(n_e + 1))
        p = rng.uniform(0.05, 1.0, (T, n_e))
        np.testing.assert_allclose(exhaustive_iw_expectation_single(label, defer, costs, q, p),
                                   expected_surrogate_single(label, defer, costs),
                                   rtol=0, atol=1e-12)

    def test_deterministic_case(self):
        # q concentrated on one expert with p = 1: every run equals the oracle
        rng = np.random.default_rng(3)
        losses = rng.uniform(0, 0.5, (2, 2, 2))
        costs = np.array([[0, 1], [0, 0]])
        q = np.array([1.0, 0.0])
        p = np.ones((2, 2))
        recs = [RoundRecord(0, 1, q, p[t], int(costs[t, 0])) for t in range(2)]
        np.testing.assert_allclose(iw_estimate(recs, losses),
                                   exhaustive_iw_expectation(losses, costs, q, p), atol=1e-15)

    def test_hand_enumeration(self):
        # independent enumeration written out for T=1, n_e=2, one scorer
        ell = np.array([[[0.1, 0.4]]])
        c = np.array([[0, 0]])
        q = np.array([0.3, 0.7])
        p = np.array([[0.5, 0.2]])
        total = 0.0
        for k, Q in itertools.product(range(2), range(2)):
            prob = q[k] * (p[0, k] if Q else 1 - p[0, k])
            value = Q * ell[0, 0, k] / (q[k] * p[0, k])
            total += prob * value
        assert exhaustive_iw_expectation(ell, c, q, p)[0] == pytest.approx(total, abs=1e-15)
        assert total == pytest.approx(0.5, abs=1e-15)

    def test_single_stage_deterministic_case(self):
        label = np.array([[0.2]])
        defer = np.array([[[0.1]]])
        q = np.array([1.0, 0.0])
        rec = SingleStageRecord(0, 0, q, np.array([0.3]))
        assert iw_estimate_single([rec], label, defer) == \
            exhaustive_iw_expectation_single(label, defer, np.array([[0]]), q, np.array([[0.3]]))[0]

    def test_cap(self):
        losses = np.zeros((20, 1, 3))
        with pytest.raises(ValueError, match="cap"):
            exhaustive_iw_expectation(losses, np.zeros((20, 3), int), np.full(3, 1 / 3),
                                      np.ones((20, 3)))
        assert MAX_OUTCOMES == 100_000


class TestSlopeAsymmetry:
    def test_all_experts_free(self):
        # zero set = every expert, so numerator and denominator coincide
        rng = np.random.default_rng(0)
        pool = random_pool(rng, 5, 2)
        X = rng.normal(size=(40, 2))
        est = estimate_slope_asymmetry(pool, X, np.zeros((40, 2), int), 500)
        assert est.value == pytest.approx(1.0)

    def test_zero_over_zero(self):
        a = np.array([[0.1, 0.2]])
        assert slope_asymmetry_ratios(a, a, np.array([[0, 1]]))[0] == 1.0
        assert slope_asymmetry_ratios(a, a + [[0.0, 0.1]], np.array([[0, 1]]))[0] == np.inf

    def test_bound_formula(self):
        costs = np.array([[0, 1, 1, 1], [0, 0, 1, 1]])
        assert slope_asymmetry_bound(costs) == 4 * 4 / 0.25
        assert slope_asymmetry_bound(np.zeros((2, 3))) == 12.0

    def test_at_least_one(self):
        rng = np.random.default_rng(1)
        pool = random_pool(rng, 6, 3)
        X = rng.normal(size=(60, 2))
        costs = rng.integers(0, 2, (60, 3))
        costs[np.arange(60), rng.integers(0, 3, 60)] = 0
        est, ratios = estimate_slope_asymmetry(pool, X, costs, 2000, return_ratios=True)
        assert np.all(ratios >= 1.0 - 1e-12)
        assert est.value >= 1.0

    def test_needs_zero_cost(self):
        pool = random_pool(np.random.default_rng(0), 2, 2)
        with pytest.raises(ValueError):
            estimate_slope_asymmetry(pool, np.zeros((1, 2)), np.ones((1, 2), int), 10)


class TestRho:
    @pytest.fixture(scope="class")
    @staticmethod
    def setup():
        rng = np.random.default_rng(2)
        return random_pool(rng, 7, 3), rng.normal(size=(80, 2))

    def test_identity_and_symmetry(self, setup):
        pool, X = setup
        assert rho_distance(pool[0], pool[0], X) == 0.0
        assert rho_distance(pool[1], pool[2], X) == rho_distance(pool[2], pool[1], X)
        M = rho_matrix(pool, X)
        np.testing.assert_allclose(M, M.T, atol=1e-15)
        np.testing.assert_allclose(np.diag(M), 0.0)
        assert M[1, 4] == pytest.approx(rho_distance(pool[1], pool[4], X), rel=1e-12)

    def test_triangle(self, setup):
        pool, X = setup
        M = rho_matrix(pool, X)
        for a, b, c in itertools.permutations(range(len(pool)), 3):
            assert M[a, c] <= M[a, b] + M[b, c] + 1e-12

    def test_empty(self, setup):
        pool, _ = setup
        with pytest.raises(ValueError):
            rho_distance(pool[0], pool[1], np.zeros((0, 2)))


class TestDisagreement:
    def test_singleton(self):
        rng = np.random.default_rng(0)
        pool = HypothesisPool([random_pool(rng, 1, 2)[0]])
        est = estimate_disagreement_coefficient(pool, 0, rng.normal(size=(10, 2)), [0.1, 1.0])
        assert est.value == 0.0

    def test_saturates(self):
        rng = np.random.default_rng(4)
        pool = random_pool(rng, 4, 3)
        X = rng.normal(size=(100, 2))
        diam = rho_matrix(pool, X).max()
        big = [2 * diam, 4 * diam]
        a = estimate_disagreement_coefficient(pool, 0, X, big[:1])
        b = estimate_disagreement_coefficient(pool, 0, X, big[1:])
        # once the ball holds the whole pool the numerator stops changing
        assert a.value * big[0] == pytest.approx(b.value * big[1], rel=1e-12)

    def test_scaling(self):
        rng = np.random.default_rng(5)
        pool = random_pool(rng, 5, 2)
        X = rng.normal(size=(50, 2))
        diam = rho_matrix(pool, X).max()
        one = estimate_disagreement_coefficient(pool, 1, X, [10 * diam])
        two = estimate_disagreement_coefficient(pool, 1, X, [20 * diam])
        assert two.value == pytest.approx(one.value / 2, rel=1e-12)

    @pytest.mark.parametrize("grid", [[], [0.0], [-1.0]])
    def test_bad_grid(self, grid):
        pool = random_pool(np.random.default_rng(0), 2, 2)
        with pytest.raises(ValueError):
            estimate_disagreement_coefficient(pool, 0, np.zeros((3, 2)), grid)

    def test_bad_index(self):
        pool = random_pool(np.random.default_rng(0), 2, 2)
        with pytest.raises(IndexError):
            estimate_disagreement_coefficient(pool, 5, np.zeros((3, 2)), [0.1])
