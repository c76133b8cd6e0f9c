from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence, Union

import numpy as np
from scipy import special, stats

from core.errors import DecompositionError, ParameterError
from core.models import Family, GaussianComponent, MixtureSpec, NBComponent
from core.utilities import PSD_TOLERANCE, SYMMETRY_TOLERANCE, make_rng

# ==================================================================================================
# SECTION 1: TYPES AND MATRIX HELPERS
# ==================================================================================================

@dataclass(frozen=True)
class LabeledSample:
    """Mixture draw: data matrix plus the latent component label (1..G) of every row."""
    data: np.ndarray
    labels: np.ndarray

    @property
    def n(self) -> int:
        return self.data.shape[0]


def as_cov_matrix(cov: Union[np.ndarray, Sequence], dim: Optional[int] = None) -> np.ndarray:
    """Validates shape and symmetry of a covariance matrix; scalars become 1x1."""
    arr = np.atleast_2d(np.asarray(cov, dtype=float))
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DecompositionError(f"covariance must be square, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise DecompositionError(f"covariance must be {dim}x{dim}, got {arr.shape}")
    scale = max(1.0, float(np.abs(arr).max()) if arr.size else 1.0)
    if arr.size and float(np.abs(arr - arr.T).max()) > SYMMETRY_TOLERANCE * scale:
        raise DecompositionError("covariance matrix is not symmetric")
    return arr


def psd_cholesky(cov: Union[np.ndarray, Sequence]) -> np.ndarray:
    """
    Lower-triangular factor L with L @ L.T == cov for a PSD matrix.
    Pivots in [-PSD_TOLERANCE, 0] are clamped to zero (their column is dropped);
    anything more negative means the matrix is not PSD.
    """
    a = as_cov_matrix(cov)
    p = a.shape[0]
    chol = np.zeros_like(a)
    for j in range(p):
        row = chol[j, :j]
        pivot = a[j, j] - row @ row
        if pivot < -PSD_TOLERANCE * max(1.0, abs(a[j, j])):
            raise DecompositionError(f"covariance is not positive semi-definite (pivot {pivot:.3e} at {j})")
        if pivot <= PSD_TOLERANCE * max(1.0, abs(a[j, j])):
            continue
        root = np.sqrt(pivot)
        chol[j, j] = root
        if j + 1 < p:
            chol[j + 1:, j] = (a[j + 1:, j] - chol[j + 1:, :j] @ row) / root
    return chol


def equicorrelation_cov(p: int, rho: float, variances: Union[float, Sequence[float]] = 1.0) -> np.ndarray:
    """Covariance with unit-free pairwise correlation rho and the given variances."""
    sd = np.sqrt(np.broadcast_to(np.asarray(variances, dtype=float), (p,)))
    corr = np.full((p, p), rho, dtype=float)
    np.fill_diagonal(corr, 1.0)
    return corr * np.outer(sd, sd)


def _check_count(n: int, minimum: int = 0) -> int:
    n = int(n)
    if n < minimum:
        raise ParameterError(f"sample size must be >= {minimum}, got {n}")
    return n


# ==================================================================================================
# SECTION 2: PRIMITIVE SAMPLERS
# ==================================================================================================

def sample_mvn(mean: Sequence[float], cov, n: int, seed: int) -> np.ndarray:
    """n i.i.d. rows N(mean, cov), built as mean + Z @ L.T with L the Cholesky factor."""
    n = _check_count(n, minimum=1)
    mean_arr = np.atleast_1d(np.asarray(mean, dtype=float))
    chol = psd_cholesky(as_cov_matrix(cov, dim=mean_arr.shape[0]))
    rng = make_rng(seed)
    return _mvn_draws(rng, mean_arr, chol, n)


def _mvn_draws(rng: np.random.Generator, mean: np.ndarray, chol: np.ndarray, n: int) -> np.ndarray:
    z = rng.standard_normal((n, chol.shape[0]))
    return mean[None, :] + z @ chol.T


def _check_nb_params(mu, theta) -> None:
    if np.any(np.asarray(mu) <= 0) or np.any(np.asarray(theta) <= 0):
        raise ParameterError("negative binomial mu and theta must be > 0")


def _nb_draws(rng: np.random.Generator, mu, theta, size) -> np.ndarray:
    # Gamma(shape=theta, scale=mu/theta) mixed Poisson: E = mu, Var = mu + mu^2/theta
    mu = np.asarray(mu, dtype=float)
    theta = np.asarray(theta, dtype=float)
    rates = rng.gamma(theta, mu / theta, size=size)
    return rng.poisson(rates).astype(np.int64)


def sample_nb(mu: float, theta: float, n: int, seed: int) -> np.ndarray:
    _check_nb_params(mu, theta)
    n = _check_count(n)
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    return _nb_draws(make_rng(seed), mu, theta, n)


def _betabin_draws(rng: np.random.Generator, x, a, b) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    p = rng.beta(a, b, size=x.shape)
    return np.asarray(rng.binomial(x, p)).astype(np.int64)


def sample_betabin(x: int, a: float, b: float, seed: int, size: Optional[int] = None):
    """Beta-binomial draw(s): p ~ Beta(a, b), then Binomial(x, p). Scalar unless `size` is given."""
    if a <= 0 or b <= 0:
        raise ParameterError(f"beta-binomial shape parameters must be > 0, got a={a}, b={b}")
    if int(x) < 0:
        raise ParameterError(f"beta-binomial size must be >= 0, got {x}")
    rng = make_rng(seed)
    shape = () if size is None else (_check_count(size),)
    draws = _betabin_draws(rng, np.full(shape, int(x), dtype=np.int64), a, b)
    return int(draws) if size is None else draws


# ==================================================================================================
# SECTION 3: MIXTURES
# ==================================================================================================

def sample_mixture(spec: MixtureSpec, n: int, seed: int) -> LabeledSample:
    """Labels drawn categorically from the weights; row i drawn from component labels[i]."""
    n = _check_count(n)
    rng = make_rng(seed)
    weights = spec.weights_array()
    labels = rng.choice(spec.n_components, size=n, p=weights / weights.sum()) + 1
    dtype = float if spec.family == Family.GAUSSIAN else np.int64
    data = np.zeros((n, spec.dim), dtype=dtype)

    for g, component in enumerate(spec.components, start=1):
        rows = np.flatnonzero(labels == g)
        if rows.size == 0:
            continue
        if isinstance(component, GaussianComponent):
            chol = psd_cholesky(component.cov_array())
            data[rows] = _mvn_draws(rng, component.mean_array(), chol, rows.size)
        else:
            data[rows] = _nb_component_draws(rng, component, rows.size)
    return LabeledSample(data=data, labels=labels.astype(np.int64))


def _nb_component_draws(rng: np.random.Generator, component: NBComponent, m: int) -> np.ndarray:
    mu = component.mu_array()[None, :]
    theta = component.theta_array()[None, :]
    return _nb_draws(rng, mu, theta, (m, component.dim))


# ==================================================================================================
# SECTION 4: CORRELATED NEGATIVE BINOMIAL (GAUSSIAN COPULA)
# ==================================================================================================

@lru_cache(maxsize=256)
def _nb_cdf_table(mu: float, theta: float) -> np.ndarray:
    p = theta / (theta + mu)
    upper = int(stats.nbinom.ppf(1.0 - 1e-15, theta, p)) + 2
    return stats.nbinom.cdf(np.arange(upper + 1), theta, p)


def nb_quantile(u: np.ndarray, mu: float, theta: float) -> np.ndarray:
    """NB(mu, theta) quantile function: smallest k with F(k) >= u."""
    table = _nb_cdf_table(float(mu), float(theta))
    k = np.searchsorted(table, u, side="left")
    return np.minimum(k, table.size - 1).astype(np.int64)


def _copula_nb(rng: np.random.Generator, mu: np.ndarray, theta: np.ndarray, rho: float, n: int) -> np.ndarray:
    p = mu.shape[0]
    # equicorrelated normals: sqrt(rho) * common factor + sqrt(1 - rho) * idiosyncratic
    common = rng.standard_normal((n, 1))
    z = np.sqrt(rho) * common + np.sqrt(1.0 - rho) * rng.standard_normal((n, p))
    u = special.ndtr(z)
    out = np.empty((n, p), dtype=np.int64)
    for j in range(p):
        out[:, j] = nb_quantile(u[:, j], mu[j], theta[j])
    return out


def sample_correlated_nb(mu: float, theta: float, rho: float, n: int, p: int, seed: int) -> np.ndarray:
    """
    n x p counts with NB(mu, theta) marginals and common pairwise latent correlation rho.
    Gaussian copula: equicorrelated normals pushed through Phi and the NB quantile function.
    """
    _check_nb_params(mu, theta)
    if not 0.0 <= rho < 1.0:
        raise ParameterError(f"rho must lie in [0, 1), got {rho}")
    n = _check_count(n)
    p = _check_count(p, minimum=1)
    rng = make_rng(seed)
    return _copula_nb(rng, np.full(p, float(mu)), np.full(p, float(theta)), rho, n)


def sample_correlated_nb_mixture(spec: MixtureSpec, rho: float, n: int, seed: int) -> LabeledSample:
    """NB mixture whose variables share latent correlation rho within every component."""
    if spec.family != Family.NEGBIN:
        raise ParameterError("correlated NB mixture needs a negbin spec")
    if not 0.0 <= rho < 1.0:
        raise ParameterError(f"rho must lie in [0, 1), got {rho}")
    rng = make_rng(seed)
    weights = spec.weights_array()
    labels = rng.choice(spec.n_components, size=n, p=weights / weights.sum()) + 1
    data = np.zeros((n, spec.dim), dtype=np.int64)
    for g, component in enumerate(spec.components, start=1):
        rows = np.flatnonzero(labels == g)
        if rows.size:
            data[rows] = _copula_nb(rng, component.mu_array(), component.theta_array(), rho, rows.size)
    return LabeledSample(data=data, labels=labels.astype(np.int64))
