from math import log, pi, sqrt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from concentra.dantzig import (
    DantzigSelector,
    dantzig_select,
    estimation_radius,
    exceeds_radius,
    failure_mass,
    lambda_p,
)
from concentra.lp import LPError, solve_lp
from concentra.problem import generate_design
from oracles import lp_by_vertices, soft_threshold


class TestSolveLP:
    def test_single_variable(self):
        res = solve_lp([1.0], [[-1.0]], [-3.0])
        np.testing.assert_allclose(res.x, [3.0])
        assert res.duality_gap < 1e-9

    def test_zero_objective(self):
        res = solve_lp([0.0, 0.0], [[1.0, 1.0]], [1.0])
        assert res.objective == 0.0
        assert res.violation <= 1e-9

    def test_infeasible(self):
        with pytest.raises(LPError, match="infeasible"):
            solve_lp([1.0], [[1.0]], [-1.0])

    def test_unbounded(self):
        with pytest.raises(LPError):
            solve_lp([-1.0], [[-1.0]], [0.0])

    @given(st.integers(0, 10**6))
    @settings(max_examples=25, deadline=None)
    def test_matches_vertex_enumeration(self, seed):
        rng = np.random.default_rng(seed)
        d = int(rng.integers(1, 5))
        m = int(rng.integers(d, d + 4))
        A = rng.normal(size=(m, d))
        b = rng.uniform(0.5, 2.0, size=m)  # z = 0 is feasible
        c = rng.uniform(-1.0, 1.0, size=d)
        A_full = np.vstack([A, -np.eye(d), np.ones((1, d))])
        b_full = np.concatenate([b, np.zeros(d), [50.0]])  # box keeps it bounded
        _, value = lp_by_vertices(c, A_full, b_full)
        res = solve_lp(c, A_full[:m].tolist() + [[1.0] * d], np.concatenate([b, [50.0]]))
        assert res.objective == pytest.approx(value, abs=1e-6)


class TestConstants:
    def test_lambda_p(self):
        assert lambda_p(100, 1) == pytest.approx(sqrt(4 * log(100)))

    def test_failure_mass_frozen(self):
        assert failure_mass(100, 1) == pytest.approx(0.0026290704356, rel=1e-10)

    def test_failure_mass_formula(self):
        assert failure_mass(32, 6) == pytest.approx(1 / (32**6 * sqrt(pi * log(32))))

    def test_small_p(self):
        with pytest.raises(ValueError):
            lambda_p(1, 1.0)


class TestEstimationRadius:
    def test_frozen_value(self):
        # 8 * sqrt(2 * log(100) / 400)
        assert estimation_radius(1, 0.0, 400, 100, 1.0, 0.0, 0.0, 1.0) == pytest.approx(
            1.2139419, abs=1e-6)

    def test_zero_noise(self):
        assert estimation_radius(2, 0.0, 50, 20, 1.0, 0.1, 0.1, 0.0) == 0.0

    def test_compressibility_term(self):
        eps = estimation_radius(4, 1.0, 50, 20, 1.0, 0.2, 0.1, 0.0)
        assert eps == pytest.approx(2 * 0.9 / 0.7 * 1.0 / 2)

    def test_condition_violated(self):
        with pytest.raises(ValueError, match="restricted isometry"):
            estimation_radius(1, 0.0, 10, 10, 1.0, 0.6, 0.4, 1.0)

    def test_critical_region(self):
        b0 = np.array([1.0, 0.0])
        assert not exceeds_radius(b0, b0, 0.5)
        assert exceeds_radius(b0 + [1.0 + 1e-9, 0], b0, 0.5)
        assert not exceeds_radius(b0 + [0.5, 0], b0, 0.5)


class TestDantzigSelect:
    def test_soft_threshold_example(self):
        n = 2
        X = sqrt(n) * np.eye(n)
        alpha = 1.0
        t = 1.0
        sol = dantzig_select(X, np.array([5.0, 0.1]), t / lambda_p(2, alpha), alpha)
        np.testing.assert_allclose(sol.beta_tilde, [4.0, 0.0], atol=1e-9)
        np.testing.assert_allclose(sol.beta_hat, sol.beta_tilde / sqrt(n))

    def test_zero_response(self):
        sol = dantzig_select(generate_design(8, 5, seed=0), np.zeros(8), 1.0, 1.0)
        np.testing.assert_array_equal(sol.beta_tilde, 0.0)

    def test_noiseless_orthonormal_recovery(self):
        Q, _ = np.linalg.qr(np.random.default_rng(3).standard_normal((10, 6)))
        X = sqrt(10) * Q
        beta0 = np.array([0.0, 2.0, 0.0, -1.0, 0.0, 0.0])
        sol = dantzig_select(X, X @ beta0, 0.0, 1.0)
        np.testing.assert_allclose(sol.beta_hat, beta0, atol=1e-8)

    @given(st.integers(0, 10**6))
    @settings(max_examples=20, deadline=None)
    def test_feasible_and_certified(self, seed):
        rng = np.random.default_rng(seed)
        X = generate_design(6, 8, seed=seed)
        y = rng.normal(size=6) * 3
        sol = dantzig_select(X, y, 0.5, 1.0)
        Xt = X / sqrt(6)
        resid = np.abs(Xt.T @ (y - Xt @ sol.beta_tilde)).max()
        assert resid <= sol.lambda_p * 0.5 + 1e-7
        assert sol.duality_gap < 1e-6
        assert sol.objective == pytest.approx(np.abs(sol.beta_tilde).sum())

    @pytest.mark.parametrize("seed", range(6))
    def test_objective_matches_vertex_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n, p = 3, 2 if seed % 2 else 3
        X = generate_design(n, p, seed=seed)
        y = rng.normal(size=n) * 2
        sigma, alpha = 0.3, 1.0
        t = lambda_p(p, alpha) * sigma
        Xt = X / sqrt(n)
        G, c = Xt.T @ Xt, Xt.T @ y
        I, Z = np.eye(p), np.zeros((p, p))
        # variables (b, s): |b| <= s, |c - G b| <= t, minimize sum s
        A = np.block([[I, -I], [-I, -I], [-G, Z], [G, Z]])
        b = np.concatenate([np.zeros(2 * p), t - c, t + c])
        _, value = lp_by_vertices(np.concatenate([np.zeros(p), np.ones(p)]), A, b)
        sol = dantzig_select(X, y, sigma, alpha)
        assert sol.objective == pytest.approx(value, abs=1e-7)

    def test_solution_dict(self):
        d = dantzig_select(generate_design(5, 4, seed=0), np.ones(5), 1.0, 1.0).to_dict()
        assert set(d) == {"beta_hat", "objective", "slack", "lambda_p"}

    def test_rejects_negative_sigma(self):
        with pytest.raises(ValueError):
            dantzig_select(generate_design(5, 4, seed=0), np.ones(5), -1.0, 1.0)


class TestIdentityDesign:
    @pytest.mark.parametrize("seed", range(100))
    def test_soft_threshold_random(self, seed):
        rng = np.random.default_rng(seed)
        n = 16
        sigma, alpha = rng.uniform(0.1, 2.0), rng.uniform(0.5, 3.0)
        y = rng.normal(scale=3.0, size=n)
        sol = dantzig_select(sqrt(n) * np.eye(n), y, sigma, alpha)
        expected = soft_threshold(y, lambda_p(n, alpha) * sigma)
        np.testing.assert_allclose(sol.beta_tilde, expected, atol=1e-6)


class TestEstimator:
    def test_fit_predict(self):
        X = generate_design(12, 6, seed=2)
        beta0 = np.array([1.5, 0, 0, 0, -1.0, 0])
        est = DantzigSelector(sigma=0.1, alpha=1.0).fit(X, X @ beta0)
        assert est.coef_.shape == (6,)
        np.testing.assert_allclose(est.predict(X), X @ est.coef_)
        assert est.n_features_in_ == 6

    def test_params_and_clone(self):
        est = DantzigSelector(sigma=0.3, alpha=2.0)
        assert est.get_params() == {"sigma": 0.3, "alpha": 2.0, "tolerance": 1e-9}
        assert clone(est).get_params() == est.get_params()

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            DantzigSelector().predict(np.ones((2, 3)))

    def test_validation(self):
        with pytest.raises(ValueError):
            DantzigSelector().fit(np.ones((3, 2)), np.ones(4))
        est = DantzigSelector().fit(generate_design(4, 3, seed=0), np.ones(4))
        with pytest.raises(ValueError, match="features"):
            est.predict(np.ones((2, 5)))
