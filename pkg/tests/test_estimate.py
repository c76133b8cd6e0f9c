import numpy as np
import pytest
from scipy import stats

from core.errors import DegenerateDataError, InsufficientDataError
from core.estimate import (
    Denominator,
    Estimator,
    empirical_cov,
    nb_loglik,
    nb_mle,
    nb_theta_columns,
    per_component,
)
from core.models import MixtureSpec
from core.samplers import sample_mixture, sample_nb
from core.utilities import THETA_CAP

THETA_GRID = np.round(np.arange(0.1, 100.0 + 1e-9, 0.01), 2)


def grid_oracle(x: np.ndarray) -> float:
    """Brute-force theta maximizing the NB likelihood at mu = mean(x)."""
    values, counts = np.unique(x, return_counts=True)
    mu = x.mean()
    p = THETA_GRID / (THETA_GRID + mu)
    loglik = (counts[None, :] * stats.nbinom.logpmf(values[None, :], THETA_GRID[:, None], p[:, None])).sum(axis=1)
    return float(THETA_GRID[np.argmax(loglik)])


# ==================================================================================================
# Empirical covariance
# ==================================================================================================

def test_empirical_cov_denominators():
    x = np.array([[1.0, 2.0], [3.0, 1.0], [5.0, 7.0]])
    unbiased = empirical_cov(x)
    assert np.allclose(unbiased, np.cov(x, rowvar=False))
    assert np.allclose(empirical_cov(x, Denominator.N), unbiased * 2.0 / 3.0)
    assert np.array_equal(unbiased, unbiased.T)


def test_empirical_cov_needs_two_rows():
    with pytest.raises(InsufficientDataError):
        empirical_cov(np.ones((1, 3)))


def test_marginal_variance_of_mixture_includes_mean_spread():
    spec = MixtureSpec.gaussian([0.5, 0.5], [[-3.0], [3.0]], [[[1.0]], [[1.0]]])
    sample = sample_mixture(spec, 100_000, seed=31)
    marginal = empirical_cov(sample.data)[0, 0]
    # Var = 1 + 9; SE of a sample variance is about sqrt(2 / n) * 10
    assert marginal == pytest.approx(10.0, abs=4 * 10.0 * np.sqrt(2.0 / 100_000))
    within = per_component(sample.data, sample.labels, Estimator.COV)
    assert len(within) == 2
    for cov in within:
        assert cov[0, 0] == pytest.approx(1.0, abs=0.03)


# ==================================================================================================
# Negative binomial overdispersion
# ==================================================================================================

def test_nb_loglik_matches_scipy():
    x = np.array([0, 3, 3, 7, 12, 1])
    expected = stats.nbinom.logpmf(x, 2.5, 2.5 / (2.5 + 4.0)).sum()
    assert nb_loglik(x, 4.0, 2.5) == pytest.approx(expected, rel=1e-12)


def test_nb_mle_matches_grid_oracle():
    x = sample_nb(5.0, 5.0, 10_000, seed=32)
    fit = nb_mle(x)
    assert fit.mu_hat == pytest.approx(x.mean())
    assert fit.converged
    assert fit.theta_hat == pytest.approx(grid_oracle(x), abs=0.02)
    assert 4.0 < fit.theta_hat < 6.0


@pytest.mark.parametrize("mu,theta,seed", [(2.0, 0.5, 1), (10.0, 3.0, 2), (30.0, 20.0, 3), (1.0, 1.0, 4)])
def test_nb_mle_random_configurations(mu, theta, seed):
    x = sample_nb(mu, theta, 3_000, seed=seed)
    fit = nb_mle(x)
    assert fit.theta_hat == pytest.approx(grid_oracle(x), abs=0.02)
    assert fit.loglik >= nb_loglik(x, x.mean(), grid_oracle(x)) - 1e-9


def _random_nb_configurations(count: int, seed: int):
    """(mu, theta, n, seed) draws whose theta_hat stays well inside the oracle grid."""
    rng = np.random.default_rng(seed)
    return [
        (float(rng.uniform(2.0, 30.0)), float(np.exp(rng.uniform(np.log(0.5), np.log(8.0)))),
         int(rng.integers(2_000, 8_000)), 100 + i)
        for i in range(count)
    ]


@pytest.mark.parametrize("mu,theta,n,seed", _random_nb_configurations(50, seed=2024))
def test_nb_mle_within_one_grid_step_of_oracle(mu, theta, n, seed):
    x = sample_nb(mu, theta, n, seed=seed)
    fit = nb_mle(x)
    oracle = grid_oracle(x)
    assert fit.converged
    assert abs(fit.theta_hat - oracle) <= 0.01 + 1e-9
    assert fit.loglik >= nb_loglik(x, x.mean(), oracle) - 1e-9


def test_nb_mle_on_poisson_counts_hits_the_cap():
    capped = 0
    for seed in range(20):
        x = np.random.default_rng(seed).poisson(5.0, size=10_000)
        fit = nb_mle(x)
        if x.var() <= x.mean():
            capped += 1
            assert fit.theta_hat == THETA_CAP
            assert not fit.converged
        else:
            # slight sample overdispersion still means a near-Poisson fit
            assert fit.theta_hat > 50.0
    assert capped > 0


def test_nb_mle_median_over_repeated_fits_is_consistent():
    fits = [nb_mle(sample_nb(5.0, 5.0, 10_000, seed=500 + i)).theta_hat for i in range(200)]
    assert 4.5 <= np.median(fits) <= 5.5


def test_marginal_theta_on_a_two_component_mixture_matches_neither_component():
    spec = MixtureSpec.negbin([0.5, 0.5], [[5.0], [60.0]], [[5.0], [40.0]])
    sample = sample_mixture(spec, 10_000, seed=37)
    theta_hat = nb_mle(sample.data[:, 0]).theta_hat
    assert not 4.5 <= theta_hat <= 5.5
    assert not 36.0 <= theta_hat <= 44.0
    # the spread between component means reads as extra dispersion
    assert theta_hat < 4.5


def test_nb_mle_underdispersed_sample_returns_cap():
    fit = nb_mle(np.array([2, 2, 3, 3, 2, 3, 2, 3]))
    assert fit.theta_hat == THETA_CAP
    assert not fit.converged


def test_nb_mle_degenerate_inputs():
    with pytest.raises(DegenerateDataError):
        nb_mle(np.zeros(10, dtype=int))
    with pytest.raises(InsufficientDataError):
        nb_mle(np.array([4]))


def test_nb_theta_columns_falls_back_for_empty_genes():
    x = np.column_stack([sample_nb(5.0, 2.0, 500, seed=5), np.zeros(500, dtype=int)])
    thetas = nb_theta_columns(x)
    assert thetas[1] == THETA_CAP
    assert 1.0 < thetas[0] < 4.0


# ==================================================================================================
# Per-component estimation
# ==================================================================================================

def test_per_component_nb_fits_recover_component_theta():
    spec = MixtureSpec.negbin([0.5, 0.5], [[5.0], [60.0]], [[5.0], [40.0]])
    sample = sample_mixture(spec, 10_000, seed=33)
    fits = per_component(sample.data, sample.labels, Estimator.NB_MLE)
    low, high = fits[0][0], fits[1][0]
    assert low.theta_hat == pytest.approx(grid_oracle(sample.data[sample.labels == 1, 0]), abs=0.02)
    assert high.theta_hat == pytest.approx(grid_oracle(sample.data[sample.labels == 2, 0]), abs=0.02)
    assert 4.0 < low.theta_hat < 6.5
    assert 28.0 < high.theta_hat < 55.0


def test_per_component_requires_two_members_per_class():
    x = np.arange(10.0).reshape(5, 2)
    with pytest.raises(InsufficientDataError, match="class 3"):
        per_component(x, [1, 1, 2, 2, 3], Estimator.COV)
