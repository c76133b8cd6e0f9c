from dataclasses import dataclass
from enum import Enum
from typing import List, Sequence, Union

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import gammaln

from core.errors import DegenerateDataError, InsufficientDataError, NegativeCountError, ParameterError
from core.utilities import THETA_CAP, THETA_FLOOR


class Denominator(str, Enum):
    N = "n"
    N_MINUS_1 = "n-1"


class Estimator(str, Enum):
    COV = "cov"
    NB_MLE = "nb_mle"


# ==================================================================================================
# SECTION 1: EMPIRICAL COVARIANCE
# ==================================================================================================

def _as_rows(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ParameterError(f"expected an n x p matrix, got shape {arr.shape}")
    return arr


def empirical_cov(x, denominator: Denominator = Denominator.N_MINUS_1) -> np.ndarray:
    """Centered cross-product matrix divided by n or n - 1; always p x p."""
    arr = _as_rows(x)
    n = arr.shape[0]
    if n < 2:
        raise InsufficientDataError(f"covariance needs at least 2 rows, got {n}")
    centered = arr - arr.mean(axis=0)
    divisor = n if Denominator(denominator) == Denominator.N else n - 1
    cov = centered.T @ centered / divisor
    return (cov + cov.T) / 2.0


def empirical_cross_cov(a, b) -> np.ndarray:
    """Sample Cov(a, b) between the columns of two row-aligned matrices, denominator n - 1."""
    a = _as_rows(a)
    b = _as_rows(b)
    if a.shape[0] != b.shape[0]:
        raise ParameterError("cross-covariance needs the same number of rows")
    if a.shape[0] < 2:
        raise InsufficientDataError("cross-covariance needs at least 2 rows")
    ac = a - a.mean(axis=0)
    bc = b - b.mean(axis=0)
    return ac.T @ bc / (a.shape[0] - 1)


# ==================================================================================================
# SECTION 2: NEGATIVE BINOMIAL OVERDISPERSION
# ==================================================================================================

@dataclass(frozen=True)
class NBFit:
    mu_hat: float
    theta_hat: float
    loglik: float
    converged: bool
    iterations: int


class _CountSummary:
    """Distinct values and multiplicities; the likelihood only needs these."""

    def __init__(self, x: np.ndarray):
        self.values, self.counts = np.unique(x, return_counts=True)
        self.values = self.values.astype(float)
        self.counts = self.counts.astype(float)
        self.const = float(np.sum(self.counts * gammaln(self.values + 1.0)))
        self.total = float(self.counts.sum())
        self.sum_x = float(np.sum(self.counts * self.values))


def _profile_loglik(summary: _CountSummary, mu: float, theta: float) -> float:
    v, c = summary.values, summary.counts
    lg = np.sum(c * gammaln(v + theta)) - summary.total * gammaln(theta) - summary.const
    log_denominator = np.log(theta + mu)
    return float(
        lg
        + summary.total * theta * (np.log(theta) - log_denominator)
        + summary.sum_x * (np.log(mu) - log_denominator)
    )


def nb_loglik(x, mu: float, theta: float) -> float:
    """NB(mu, theta) log-likelihood of a count vector."""
    return _profile_loglik(_CountSummary(_as_count_vector(x)), float(mu), float(theta))


def _as_count_vector(x) -> np.ndarray:
    arr = np.asarray(x).ravel()
    if arr.size and np.any(arr < 0):
        raise NegativeCountError("NB likelihood requires non-negative counts")
    return arr


def nb_mle(x, grid_points: int = 121) -> NBFit:
    """
    Profile MLE: mu_hat is the sample mean, theta_hat maximizes the likelihood over
    log theta in [log THETA_FLOOR, log THETA_CAP]. A coarse grid locates the bracket,
    bounded Brent refines it to 1e-8 in log theta.
    Equi- or underdispersed samples return THETA_CAP with converged=False.
    """
    arr = _as_count_vector(x)
    if arr.size < 2:
        raise InsufficientDataError(f"NB fit needs at least 2 observations, got {arr.size}")
    mu_hat = float(arr.mean())
    if mu_hat == 0.0:
        raise DegenerateDataError("NB fit is undefined for an all-zero sample")

    summary = _CountSummary(arr)
    if float(arr.var()) <= mu_hat:
        return NBFit(mu_hat, THETA_CAP, _profile_loglik(summary, mu_hat, THETA_CAP), False, 0)

    def negative(log_theta: float) -> float:
        return -_profile_loglik(summary, mu_hat, float(np.exp(log_theta)))

    grid = np.linspace(np.log(THETA_FLOOR), np.log(THETA_CAP), grid_points)
    values = np.array([negative(g) for g in grid])
    best = int(np.argmin(values))
    lower = grid[max(best - 1, 0)]
    upper = grid[min(best + 1, grid_points - 1)]

    result = minimize_scalar(negative, bounds=(lower, upper), method="bounded", options={"xatol": 1e-8})
    log_theta = float(result.x)
    if values[best] < result.fun:
        log_theta = float(grid[best])
    theta_hat = float(min(np.exp(log_theta), THETA_CAP))
    return NBFit(
        mu_hat=mu_hat,
        theta_hat=theta_hat,
        loglik=_profile_loglik(summary, mu_hat, theta_hat),
        converged=bool(result.success),
        iterations=int(result.nfev) + grid_points,
    )


def nb_mle_columns(x) -> List[NBFit]:
    arr = np.asarray(x)
    if arr.ndim == 1:
        arr = arr[:, None]
    return [nb_mle(arr[:, j]) for j in range(arr.shape[1])]


def nb_theta_columns(x, fallback: float = THETA_CAP) -> np.ndarray:
    """Per-column theta_hat; all-zero columns carry no dispersion signal and get `fallback`."""
    arr = np.asarray(x)
    if arr.ndim == 1:
        arr = arr[:, None]
    thetas = np.empty(arr.shape[1], dtype=float)
    for j in range(arr.shape[1]):
        try:
            thetas[j] = nb_mle(arr[:, j]).theta_hat
        except DegenerateDataError:
            thetas[j] = fallback
    return thetas


# ==================================================================================================
# SECTION 3: PER-COMPONENT ESTIMATION
# ==================================================================================================

PerComponent = Union[np.ndarray, List[NBFit]]


def per_component(x, labels: Sequence[int], estimator: Estimator) -> List[PerComponent]:
    """
    Applies the estimator within each label class, ordered by sorted label.
    Cov yields one covariance matrix per class; NBMle one list of per-variable fits.
    """
    arr = np.asarray(x)
    if arr.ndim == 1:
        arr = arr[:, None]
    labels = np.asarray(labels)
    if labels.shape[0] != arr.shape[0]:
        raise ParameterError(f"{labels.shape[0]} labels for {arr.shape[0]} rows")

    estimator = Estimator(estimator)
    results: List[PerComponent] = []
    for label in np.unique(labels):
        rows = arr[labels == label]
        if rows.shape[0] < 2:
            raise InsufficientDataError(f"class {label} has {rows.shape[0]} member(s); at least 2 are required")
        if estimator == Estimator.COV:
            results.append(empirical_cov(rows))
        else:
            results.append(nb_mle_columns(rows))
    return results
