import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dbmc.cv import (CvSamples, DegenerateVariance, SingularCovariance, Unbounded, adjusted_samples,
                     controlled_mean, empirical_vrr, optimal_beta, r_squared_from_cov, theoretical_vrr)
from dbmc.harness import TWO_CONTROL_COV, regression_vrr_oracle


def test_samples_validation():
    with pytest.raises(ValueError):
        CvSamples(np.zeros(3), np.zeros((3, 2)), np.zeros(2))  # n < k + 2
    with pytest.raises(ValueError):
        CvSamples(np.zeros(5), np.zeros((5, 2)), np.zeros(1))
    with pytest.raises(ValueError):
        CvSamples(np.zeros(4), np.zeros((5, 1)), np.zeros(1))
    s = CvSamples(np.arange(5.0), np.arange(5.0), [0.0])
    assert s.x.shape == (5, 1) and s.k == 1 and s.n == 5


def test_perfect_control(rng):
    y = rng.normal(size=200)
    sol = optimal_beta(CvSamples(y, y[:, None], [0.0]))
    assert sol.beta[0] == pytest.approx(1.0, abs=1e-12)
    assert sol.r_squared == pytest.approx(1.0, abs=1e-12)


def test_independent_control(rng):
    y = rng.standard_normal(100_000)
    x = np.random.default_rng(999).standard_normal(100_000)
    sol = optimal_beta(CvSamples(y, x, [0.0]))
    assert abs(sol.beta[0]) < 0.02
    assert sol.r_squared < 0.001


def test_linear_model_population_values(rng):
    n = 100_000
    x = rng.standard_normal(n)
    y = 2 * x + 0.5 * rng.standard_normal(n)
    sol = optimal_beta(CvSamples(y, x, [0.0]))
    assert 1.95 <= sol.beta[0] <= 2.05
    assert sol.r_squared == pytest.approx(4 / 4.25, abs=0.01)


def test_duplicate_controls_are_singular(rng):
    x = rng.normal(size=50)
    with pytest.raises(SingularCovariance):
        optimal_beta(CvSamples(x + rng.normal(size=50), np.column_stack([x, x]), [0.0, 0.0]))


def test_constant_control_is_singular(rng):
    with pytest.raises(SingularCovariance):
        optimal_beta(CvSamples(rng.normal(size=20), np.ones(20), [1.0]))


def test_controlled_mean_hand_example():
    s = CvSamples([1.0, 3.0, 2.0, 2.0], [[2.0], [4.0], [3.0], [3.0]], [3.0])
    assert np.allclose(adjusted_samples(s, [0.5])[:2], [1.5, 2.5])
    s2 = CvSamples([1.0, 3.0, 1.0, 3.0], [[2.0], [4.0], [2.0], [4.0]], [3.0])
    assert controlled_mean(s2, [0.5]).mean == 2.0


def test_zero_beta_is_crude_mean(rng):
    s = CvSamples(rng.normal(size=30), rng.normal(size=(30, 2)), [0.3, -0.1])
    cm = controlled_mean(s, [0.0, 0.0])
    assert cm.mean == s.y.mean()
    assert cm.variance == s.y.var(ddof=1)


def test_controls_at_their_mean_change_nothing(rng):
    y = rng.normal(size=10)
    s = CvSamples(y, np.full((10, 2), [1.5, -2.0]), [1.5, -2.0])
    assert controlled_mean(s, [3.0, -7.0]).mean == y.mean()


def test_beta_length_checked(rng):
    s = CvSamples(rng.normal(size=10), rng.normal(size=(10, 2)), [0, 0])
    with pytest.raises(ValueError):
        controlled_mean(s, [1.0])


def test_theoretical_vrr_values():
    assert theoretical_vrr(0.0) == 1.0
    assert theoretical_vrr(0.81) == pytest.approx(5.2632, abs=1e-4)
    with pytest.raises(Unbounded):
        theoretical_vrr(1.0)
    with pytest.raises(ValueError):
        theoretical_vrr(-0.1)


def test_two_control_closed_form():
    c = TWO_CONTROL_COV
    r2 = r_squared_from_cov(c[1:, 1:], c[1:, 0], 1.0)
    # hand solve of the 2x2 system: beta = (2/3, 4/15)
    assert r2 == pytest.approx(0.8 * 2 / 3 + 0.6 * 4 / 15, abs=1e-14)
    oracle = regression_vrr_oracle(np.random.default_rng(3), c, 1_000_000)
    assert theoretical_vrr(r2) == pytest.approx(oracle, rel=0.05)


def test_empirical_vrr_values():
    assert empirical_vrr(3.0, 3.0) == 1.0
    assert empirical_vrr(10.0, 2.0) == 5.0
    with pytest.raises(DegenerateVariance):
        empirical_vrr(1.0, 0.0)


def test_empirical_vrr_bivariate_gaussian(rng):
    cov = [[1.0, 0.9], [0.9, 1.0]]
    n = 100_000
    crude = rng.multivariate_normal([0, 0], cov, size=n)[:, 0]
    d = rng.multivariate_normal([0, 0], cov, size=n)
    s = CvSamples(d[:, 0], d[:, 1], [0.0])
    v = empirical_vrr(crude.var(ddof=1), controlled_mean(s, optimal_beta(s).beta).variance)
    assert v == pytest.approx(1 / 0.19, rel=0.10)


def test_fixed_beta_is_unbiased(rng):
    cov = np.array([[2.0, 1.2], [1.2, 1.0]])
    mean = np.array([5.0, -1.0])
    ests = []
    for _ in range(1000):
        d = rng.multivariate_normal(mean, cov, size=20)
        ests.append(controlled_mean(CvSamples(d[:, 0], d[:, 1], [-1.0]), [0.7]).mean)
    ests = np.array(ests)
    se = ests.std(ddof=1) / np.sqrt(len(ests))
    assert abs(ests.mean() - 5.0) < 4 * se


def test_variance_formula(rng):
    c = TWO_CONTROL_COV * 3.0
    d = rng.multivariate_normal(np.zeros(3), c, size=200_000)
    s = CvSamples(d[:, 0], d[:, 1:], [0.0, 0.0])
    r2 = r_squared_from_cov(c[1:, 1:], c[1:, 0], c[0, 0])
    var_z = controlled_mean(s, optimal_beta(s).beta).variance
    # relative MC error of a variance from 2e5 normals is ~0.3%
    assert var_z == pytest.approx((1 - r2) * c[0, 0], rel=0.02)


def _instance(seed, n, k):
    g = np.random.default_rng(seed)
    a = g.normal(size=(k + 1, k + 1))
    d = g.normal(size=(n, k + 1)) @ a + g.normal(size=k + 1)
    return d[:, 0], d[:, 1:], g.normal(size=k)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(8, 200), st.integers(1, 4))
def test_controlled_mean_is_ols_intercept(seed, n, k):
    y, x, mu = _instance(seed, n, k)
    s = CvSamples(y, x, mu)
    cv = controlled_mean(s, optimal_beta(s).beta).mean
    design = np.column_stack([np.ones(n), x - mu])
    coef = np.linalg.lstsq(design, y, rcond=None)[0]
    assert cv == pytest.approx(coef[0], rel=1e-10, abs=1e-10 * np.abs(y).max())


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(10, 200), st.integers(1, 4))
def test_beta_solution_invariants(seed, n, k):
    y, x, mu = _instance(seed, n, k)
    sol = optimal_beta(CvSamples(y, x, mu))
    assert np.array_equal(sol.sigma_x, sol.sigma_x.T)
    eig = np.linalg.eigvalsh(sol.sigma_x)
    assert eig.min() >= -1e-12 * np.trace(sol.sigma_x)
    assert 0.0 <= sol.r_squared <= 1.0 + 1e-12
    assert np.allclose(sol.sigma_x @ sol.beta, sol.sigma_xy, rtol=1e-8, atol=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(12, 200), st.integers(2, 5))
def test_adding_a_control_never_lowers_r_squared(seed, n, k):
    y, x, mu = _instance(seed, n, k)
    r2 = [optimal_beta(CvSamples(y, x[:, :j], mu[:j])).r_squared for j in range(1, k + 1)]
    assert all(b >= a - 1e-10 for a, b in zip(r2, r2[1:]))
