import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import linprog
from scipy.stats import kstest
from sklearn.base import clone

from lindlearn.interp import (
    FitConfig,
    FitError,
    PolynomialFit,
    RobustPolynomialRegressor,
    _assign,
    _l1_dual,
    chebyshev_nodes,
    chebyshev_partition_edges,
    chebyshev_sample,
    choose_time_grid,
    degree_heuristic,
    derivative_at_zero,
    derivative_error_budget,
    error_amplification,
    fit_trace,
    l1_regression,
    linf_regression,
    markov_constant,
    robust_fit,
    select_degree,
)
from lindlearn.pauli import PauliString, ProductStateSpec
from lindlearn.simulator import TimeTrace


def grid_sup(fit, p, a, b):
    g = np.linspace(a, b, 2001)
    return float(np.max(np.abs(fit(g) - p(g))))


def random_poly(rng, d, a=-1.0, b=1.0):
    return np.polynomial.Chebyshev(rng.uniform(-1, 1, d + 1), domain=[a, b])


# -- sampling


def test_chebyshev_sample_basic():
    rng = np.random.default_rng(0)
    x = chebyshev_sample(1, 2.0, 3.0, rng)
    assert 2.0 <= x[0] <= 3.0
    with pytest.raises(ValueError):
        chebyshev_sample(5, 1.0, 1.0, rng)


def test_chebyshev_sample_arcsine_law():
    x = chebyshev_sample(100_000, -1.0, 1.0, np.random.default_rng(1))
    cdf = lambda v: 0.5 + np.arcsin(np.clip(v, -1, 1)) / np.pi  # noqa: E731
    assert kstest(x, cdf).statistic < 0.01


def test_chebyshev_nodes_and_partitions():
    x = chebyshev_nodes(5, 0.0, 1.0)
    assert np.all(np.diff(x) > 0) and x[0] > 0 and x[-1] < 1
    e = chebyshev_partition_edges(4)
    assert e[0] == -1 and e[-1] == 1 and np.all(np.diff(e) > 0)
    assert list(_assign(np.array([-1.0, -0.5, 0.1, 1.0]), 4)) == [0, 1, 2, 3]


# -- l1 regression


def test_l1_exact_line():
    x = np.linspace(0, 1, 20)
    fit = l1_regression(x, 2 * x - 1, 1, 2)
    assert np.allclose(fit(x), 2 * x - 1, atol=1e-10)
    assert fit.residual_sup < 1e-10


def test_l1_bounded_noise_quadratic():
    rng = np.random.default_rng(2)
    d, sigma = 2, 0.01
    worst = 0.0
    for _ in range(50):
        p = random_poly(rng, d)
        x = chebyshev_sample(60, -1, 1, rng)
        y = p(x) + rng.uniform(-sigma, sigma, len(x))
        worst = max(worst, grid_sup(l1_regression(x, y, d, 2 * (d + 1)), p, -1, 1))
    assert worst <= 10 * d**2 * sigma


def test_l1_ignores_sparse_outliers():
    rng = np.random.default_rng(3)
    sigma = 0.01
    p = random_poly(rng, 3)
    x = chebyshev_sample(100, -1, 1, rng)
    y = p(x) + rng.uniform(-sigma, sigma, len(x))
    clean = l1_regression(x, y, 3, 4)
    bad = y.copy()
    idx = rng.choice(len(x), 10, replace=False)
    bad[idx] += 10 * rng.choice([-1, 1], 10)
    assert grid_sup(l1_regression(x, bad, 3, 4), clean, -1, 1) <= 5 * sigma


def _l1_primal(V, y, w):
    n, k = V.shape
    c = np.concatenate([np.zeros(k), w])
    A = np.vstack([np.hstack([V, -np.eye(n)]), np.hstack([-V, -np.eye(n)])])
    b = np.concatenate([y, -y])
    res = linprog(c, A_ub=A, b_ub=b, bounds=[(None, None)] * k + [(0, None)] * n, method="highs")
    return res.x[:k], res.fun


@given(st.integers(0, 2**31), st.integers(1, 5))
def test_l1_dual_matches_primal_objective(seed, d):
    rng = np.random.default_rng(seed)
    u = np.sort(rng.uniform(-1, 1, 40))
    y = np.sin(3 * u) + 0.1 * rng.standard_t(2, size=40)
    w = rng.uniform(0.5, 1.5, 40)
    V = np.vander(u, d + 1, increasing=True)
    coef = _l1_dual(V, y, w)
    _, best = _l1_primal(V, y, w)
    assert np.sum(w * np.abs(y - V @ coef)) == pytest.approx(best, rel=1e-7, abs=1e-9)


# -- l_inf regression


def test_linf_constant_and_exact():
    x = np.linspace(-1, 1, 30)
    fit = linf_regression(x, np.full(30, 0.3), 2, 3)
    assert np.allclose(fit(x), 0.3)
    # partition medians of a line lie on the line, so the minimax fit is exact
    fit = linf_regression(x, 0.1 - 0.4 * x, 1, 6)
    assert fit.residual_sup < 1e-9
    assert np.allclose(fit(x), 0.1 - 0.4 * x)


def test_linf_median_removes_single_outlier():
    x = np.linspace(-1, 1, 40)
    y = np.where(x < 0, 0.2, 0.7)
    bad = y.copy()
    bad[7] = 50.0
    a = linf_regression(x, y, 1, 4)
    b = linf_regression(x, bad, 1, 4)
    assert np.allclose(a.coefficients, b.coefficients, atol=1e-12)


# -- robust fit


def test_robust_fit_noiseless_cubic():
    p = np.polynomial.Polynomial([0.2, -1.0, 0.5, 0.8])
    x = chebyshev_nodes(60, -1, 1)
    fit = robust_fit(x, p(x), 3)
    assert grid_sup(fit, p, -1, 1) < 1e-9


def test_robust_fit_minimum_points():
    with pytest.raises(FitError):
        robust_fit(np.linspace(0, 1, 10), np.zeros(10), 5)


@pytest.mark.parametrize("outliers", [0.0, 0.4])
def test_robust_fit_three_sigma_audit(outliers):
    rng = np.random.default_rng(4)
    sigma, ok, trials = 0.01, 0, 100
    for _ in range(trials):
        d = int(rng.integers(1, 6))
        p = random_poly(rng, d, 0.0, 1.0)
        x = chebyshev_sample(200, 0.0, 1.0, rng)
        y = p(x) + rng.uniform(-sigma, sigma, len(x))
        bad = rng.permutation(len(x))[: int(outliers * len(x))]
        y[bad] = rng.uniform(-10, 10, len(bad))
        ok += grid_sup(robust_fit(x, y, d, domain=(0.0, 1.0)), p, 0.0, 1.0) <= 3 * sigma
    assert ok / trials >= 0.95


def test_noise_doubling_at_most_doubles_error():
    rng = np.random.default_rng(5)
    x = chebyshev_nodes(80, -1, 1)
    errs = {1: [], 2: []}
    for _ in range(150):
        p = random_poly(rng, 3)
        z = rng.uniform(-1, 1, len(x))
        for k in (1, 2):
            errs[k].append(grid_sup(robust_fit(x, p(x) + k * 0.01 * z, 3), p, -1, 1))
    q1, q2 = np.percentile(errs[1], 95), np.percentile(errs[2], 95)
    assert q2 <= 2 * q1 * 1.05


@given(st.integers(0, 2**31), st.integers(1, 5), st.floats(0.1, 3.0), st.floats(0.5, 4.0))
def test_affine_rescale_round_trip(seed, d, a, width):
    rng = np.random.default_rng(seed)
    b = a + width
    x = np.sort(rng.uniform(a, b, 60))
    y = np.cos(x) + 0.01 * rng.normal(size=60)
    fit = robust_fit(x, y, d, domain=(a, b))
    u = (2 * x - a - b) / (b - a)
    unit = robust_fit(u, y, d, domain=(-1.0, 1.0))
    assert np.allclose(fit(x), unit(u), atol=1e-9)


def test_anchored_fit_pins_left_end():
    rng = np.random.default_rng(6)
    x = np.linspace(0.05, 1.0, 80)
    y = np.sin(2 * x) + 0.001 * rng.normal(size=80)
    fit = robust_fit(x, y, 4, domain=(0.0, 1.0), anchor=0.0)
    assert abs(fit(0.0)) < 1e-9
    assert derivative_at_zero(fit) == pytest.approx(2.0, abs=0.05)


# -- derivative and budget


def test_derivative_at_zero_examples():
    assert derivative_at_zero(PolynomialFit(1, [7.3, 3.0], (0.1, 2.1))) == pytest.approx(3.0)
    # p(t) = t^2 on [0.5, 1.5]: u = 2t - 2, t = (u + 2)/2
    fit = PolynomialFit(2, [1.0, 1.0, 0.25], (0.5, 1.5))
    assert fit(1.2) == pytest.approx(1.44)
    assert derivative_at_zero(fit) == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(ValueError):
        derivative_at_zero(PolynomialFit(1, [0, 1], (-1, 1)))


@given(st.integers(0, 2**31), st.floats(0.0, 1.0), st.floats(0.5, 3.0))
def test_derivative_matches_monomial_differentiation(seed, a, width):
    rng = np.random.default_rng(seed)
    b = a + width
    c = rng.normal(size=6)
    fit = PolynomialFit(5, c, (a, b))
    # independent route: expand p(t) = sum c_k ((2t - a - b)/(b - a))^k, derivative at 0
    s, r = 2 / (b - a), -(a + b) / (b - a)
    expected = sum(c[k] * k * s * r ** (k - 1) for k in range(1, 6))
    assert derivative_at_zero(fit) == pytest.approx(expected, rel=1e-12, abs=1e-12)


def test_markov_constant_examples():
    assert markov_constant(4, 1) == 16
    assert markov_constant(3, 2) == pytest.approx(24.0)
    big = markov_constant(20, 3)
    assert big == pytest.approx(400 * 399 * 396 / 15)
    with pytest.raises(ValueError):
        markov_constant(3, 4)


@pytest.mark.parametrize("d", range(1, 13))
def test_budget_corollary(d):
    a = d**-2.0
    assert derivative_error_budget(a, 2 + a, d, 1.0) <= 3 * math.e / a


@pytest.mark.parametrize("d", [1, 2, 3, 5, 7])
def test_budget_is_upper_bound(d):
    rng = np.random.default_rng(d)
    a, b, sigma = 0.05, 1.05, 0.01
    g = np.linspace(a, b, 4001)
    budget = derivative_error_budget(a, b, d, sigma)
    for _ in range(200):
        q = np.polynomial.Chebyshev(rng.normal(size=d + 1), domain=[a, b])
        q = q * (3 * sigma / np.max(np.abs(q(g))))
        assert abs(q.deriv()(0.0)) <= budget * (1 + 1e-9)


def test_error_amplification_positive():
    assert error_amplification(0.0, 2.0, 1) == pytest.approx(1.0)


# -- heuristics


def test_choose_time_grid():
    assert choose_time_grid(1e-3, 1) == (1.0, 3.0, math.ceil(4 * math.log(2)))
    t0, tmax, m = choose_time_grid(1e-3, 7, time_scale=0.1)
    assert t0 == pytest.approx(0.1 / 49) and tmax == pytest.approx(0.1 * (2 + 1 / 49))
    with pytest.raises(ValueError):
        choose_time_grid(0.0, 3)


def test_degree_heuristic():
    eps = math.exp(-1)
    assert degree_heuristic(1.0, 1.0, eps) == 5
    assert degree_heuristic(1.0, 1.0, 0.999999) == 1
    assert 1 <= degree_heuristic(0.5, 16, 1e-3) <= 7
    d = degree_heuristic(0.05, 2, 1e-3)
    t0, tmax, m = choose_time_grid(1e-3, d)
    assert math.isfinite(t0) and m > 0


# -- degree selection


def test_select_degree_prefers_low_degree_for_line():
    rng = np.random.default_rng(7)
    x = np.linspace(0, 1, 120)
    y = 1 - 0.5 * x + 1e-4 * rng.normal(size=120)
    fit, scores = select_degree(x, y, FitConfig(degrees_to_try=(1, 2, 3, 4)))
    assert fit.degree == min(scores, key=lambda k: (scores[k], k))
    assert abs(derivative_at_zero(fit) + 0.5) < 1e-2


def test_select_degree_reports_cause():
    with pytest.raises(FitError, match="no degree"):
        select_degree(np.linspace(0, 1, 6), np.zeros(6), FitConfig(degrees_to_try=(5,)))


def test_fit_trace_uses_reference_row():
    O, rho = PauliString.parse("X0", 1), ProductStateSpec.parse("+Z0", 1)
    t = np.concatenate([[0.0], np.linspace(0.05, 1.0, 100)])
    y = 0.25 + 0.8 * t - 0.3 * t**2
    tr = TimeTrace(O, rho, t, y, np.zeros_like(t))
    fit, d0, _ = fit_trace(tr, FitConfig(degrees_to_try=(2,)))
    assert d0 == pytest.approx(0.8, abs=1e-8)
    assert fit(0.0) == pytest.approx(0.25, abs=1e-10)


# -- estimator


def test_regressor_fit_predict_and_clone():
    x = np.linspace(0.05, 1.0, 100)
    y = 0.3 + 2 * x - x**3
    est = RobustPolynomialRegressor(degree=3, anchor=0.3).fit(x[:, None], y)
    assert est.degree_ == 3
    assert np.allclose(est.predict(x[:, None]), y, atol=1e-9)
    assert est.derivative_at_zero() == pytest.approx(2.0, abs=1e-8)
    assert est.score(x[:, None], y) == pytest.approx(1.0)
    twin = clone(est)
    assert twin.get_params() == est.get_params() and not hasattr(twin, "fit_")


def test_regressor_cv_and_errors():
    x = np.linspace(0, 1, 150)
    est = RobustPolynomialRegressor(degrees_to_try=(1, 2, 3)).fit(x[:, None], x**2)
    assert est.degree_ in (2, 3)
    with pytest.raises(ValueError):
        RobustPolynomialRegressor().fit(np.ones((10, 2)), np.ones(10))
    with pytest.raises(Exception):
        RobustPolynomialRegressor().predict(x[:, None])
