import numpy as np
import pytest
from scipy import stats

from core.errors import DecompositionError, ParameterError
from core.models import MixtureSpec
from core.samplers import (
    equicorrelation_cov,
    nb_quantile,
    psd_cholesky,
    sample_betabin,
    sample_correlated_nb,
    sample_correlated_nb_mixture,
    sample_mixture,
    sample_mvn,
    sample_nb,
)


def _count_gof_pvalue(x: np.ndarray, dist) -> float:
    """Chi-square goodness of fit of integer draws against a frozen scipy distribution, upper tail pooled."""
    top = int(dist.ppf(0.999))
    observed = np.bincount(np.minimum(x, top), minlength=top + 1)
    expected = x.size * np.r_[dist.pmf(np.arange(top)), dist.sf(top - 1)]
    return float(stats.chisquare(observed, expected).pvalue)


# ==================================================================================================
# Multivariate normal
# ==================================================================================================

def test_mvn_empirical_covariance_matches_identity():
    x = sample_mvn([0.0, 0.0], np.eye(2), 100_000, seed=11)
    assert x.shape == (100_000, 2)
    assert np.allclose(np.cov(x, rowvar=False), np.eye(2), atol=0.02)
    assert np.allclose(x.mean(axis=0), 0.0, atol=0.02)


def test_mvn_is_reproducible_per_seed():
    cov = [[2.0, 0.3], [0.3, 1.0]]
    a = sample_mvn([1.0, -1.0], cov, 50, seed=7)
    b = sample_mvn([1.0, -1.0], cov, 50, seed=7)
    c = sample_mvn([1.0, -1.0], cov, 50, seed=8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_mvn_rejects_bad_inputs():
    with pytest.raises(ParameterError):
        sample_mvn([0.0], [[1.0]], 0, seed=1)
    with pytest.raises(DecompositionError):
        sample_mvn([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]], 10, seed=1)  # not PSD
    with pytest.raises(DecompositionError):
        sample_mvn([0.0, 0.0], [[1.0, 0.5], [0.1, 1.0]], 10, seed=1)  # not symmetric
    with pytest.raises(DecompositionError):
        sample_mvn([0.0, 0.0, 0.0], np.eye(2), 10, seed=1)


def test_psd_cholesky_handles_singular_matrix():
    cov = np.array([[1.0, 1.0], [1.0, 1.0]])
    chol = psd_cholesky(cov)
    assert np.allclose(chol @ chol.T, cov)
    assert np.allclose(np.triu(chol, 1), 0.0)


def test_equicorrelation_cov_scales_by_standard_deviations():
    cov = equicorrelation_cov(3, 0.5, [1.0, 4.0, 9.0])
    assert np.allclose(np.diag(cov), [1.0, 4.0, 9.0])
    assert cov[0, 1] == pytest.approx(0.5 * 1.0 * 2.0)
    assert cov[1, 2] == pytest.approx(0.5 * 2.0 * 3.0)


# ==================================================================================================
# Count samplers
# ==================================================================================================

def test_nb_moments():
    x = sample_nb(5.0, 5.0, 100_000, seed=3)
    assert x.dtype == np.int64
    assert x.min() >= 0
    # E = 5, Var = 5 + 25 / 5 = 10
    assert x.mean() == pytest.approx(5.0, abs=3 * np.sqrt(10.0 / 100_000) + 0.01)
    assert x.var() == pytest.approx(10.0, rel=0.03)


def test_nb_parameter_checks():
    with pytest.raises(ParameterError):
        sample_nb(0.0, 5.0, 10, seed=1)
    with pytest.raises(ParameterError):
        sample_nb(5.0, -1.0, 10, seed=1)
    assert sample_nb(5.0, 5.0, 0, seed=1).size == 0


def test_betabin_scalar_and_vector():
    one = sample_betabin(10, 2.0, 3.0, seed=5)
    assert isinstance(one, int) and 0 <= one <= 10
    many = sample_betabin(10, 2.0, 3.0, seed=5, size=20_000)
    assert many.shape == (20_000,)
    assert many.min() >= 0 and many.max() <= 10
    # mean x a / (a + b) = 4
    assert many.mean() == pytest.approx(4.0, abs=0.1)
    with pytest.raises(ParameterError):
        sample_betabin(10, 0.0, 1.0, seed=5)

def test_nb_with_huge_theta_is_poisson():
    x = sample_nb(4.0, 1e8, 100_000, seed=12)
    assert x.var() == pytest.approx(4.0, rel=0.03)
    assert _count_gof_pvalue(x, stats.poisson(4.0)) > 0.001


def test_betabin_with_large_concentration_is_binomial():
    x = sample_betabin(20, 3e6, 7e6, seed=13, size=100_000)
    assert x.var() == pytest.approx(20 * 0.3 * 0.7, rel=0.03)
    assert _count_gof_pvalue(x, stats.binom(20, 0.3)) > 0.001



# ==================================================================================================
# Mixtures
# ==================================================================================================

def test_gaussian_mixture_labels_and_component_means():
    spec = MixtureSpec.gaussian([0.3, 0.7], [[-4.0], [4.0]], [[[1.0]], [[1.0]]])
    sample = sample_mixture(spec, 20_000, seed=21)
    assert set(np.unique(sample.labels)) == {1, 2}
    assert np.mean(sample.labels == 1) == pytest.approx(0.3, abs=0.015)
    assert sample.data[sample.labels == 1].mean() == pytest.approx(-4.0, abs=0.05)
    assert sample.data[sample.labels == 2].mean() == pytest.approx(4.0, abs=0.05)


def test_nb_mixture_is_integer_valued():
    spec = MixtureSpec.negbin([0.5, 0.5], [[5.0, 5.0], [60.0, 60.0]], [[5.0, 5.0], [40.0, 40.0]])
    sample = sample_mixture(spec, 2_000, seed=4)
    assert sample.data.dtype == np.int64
    assert sample.n == 2_000
    high = sample.data[sample.labels == 2]
    assert high.mean() == pytest.approx(60.0, rel=0.05)

def test_mixture_label_frequencies_match_weights():
    weights = [0.2, 0.3, 0.5]
    spec = MixtureSpec.gaussian(weights, [[-3.0], [0.0], [3.0]], [[[1.0]], [[1.0]], [[1.0]]])
    sample = sample_mixture(spec, 100_000, seed=23)
    observed = np.bincount(sample.labels, minlength=4)[1:]
    assert stats.chisquare(observed, 100_000 * np.array(weights)).pvalue > 0.001



# ==================================================================================================
# Correlated counts
# ==================================================================================================

def test_nb_quantile_agrees_with_scipy():
    u = np.array([0.013, 0.21, 0.5, 0.77, 0.993])
    expected = stats.nbinom.ppf(u, 5.0, 5.0 / 10.0)
    assert np.array_equal(nb_quantile(u, 5.0, 5.0), expected.astype(np.int64))


def test_correlated_nb_independent_when_rho_zero():
    x = sample_correlated_nb(5.0, 10.0, 0.0, 10_000, 4, seed=9)
    corr = np.corrcoef(x, rowvar=False)
    off = corr[~np.eye(4, dtype=bool)]
    assert np.all(np.abs(off) < 3 / np.sqrt(10_000) + 0.01)
    assert x.mean() == pytest.approx(5.0, abs=0.05)


def test_correlated_nb_correlation_increases_with_rho():
    weak = np.corrcoef(sample_correlated_nb(5.0, 10.0, 0.3, 5_000, 2, seed=2), rowvar=False)[0, 1]
    strong = np.corrcoef(sample_correlated_nb(5.0, 10.0, 0.9, 5_000, 2, seed=2), rowvar=False)[0, 1]
    assert 0.15 < weak < strong
    assert strong > 0.7


def test_correlated_nb_rejects_rho_outside_unit_interval():
    with pytest.raises(ParameterError):
        sample_correlated_nb(5.0, 10.0, 1.0, 10, 2, seed=1)
    spec = MixtureSpec.gaussian([1.0], [[0.0]], [[[1.0]]])
    with pytest.raises(ParameterError):
        sample_correlated_nb_mixture(spec, 0.5, 10, seed=1)


def test_correlated_nb_keeps_nb_marginals_in_high_dimension():
    x = sample_correlated_nb(5.0, 10.0, 0.9, 4_000, 50, seed=14)
    assert x.shape == (4_000, 50)
    marginal = stats.nbinom(10.0, 10.0 / 15.0)
    for j in (0, 49):
        assert _count_gof_pvalue(x[:, j], marginal) > 0.001


def test_correlated_nb_rank_correlation_is_monotone_in_rho():
    mean_rank_corr = []
    for rho in (0.0, 0.3, 0.6, 0.9):
        x = sample_correlated_nb(5.0, 10.0, rho, 2_000, 50, seed=15)
        ranks = stats.spearmanr(x)[0]
        mean_rank_corr.append(ranks[~np.eye(50, dtype=bool)].mean())
    assert abs(mean_rank_corr[0]) < 0.01
    assert np.all(np.diff(mean_rank_corr) > 0)
    assert mean_rank_corr[-1] > 0.75
