import math
from typing import List, NamedTuple, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field
from scipy import integrate, special, stats

from core.errors import ConvergenceError, DimMismatchError, DomainError, ParameterError
from core.models import BiasSpec, Family, MixtureSpec, Type1Curve, Type1Variant
from core.samplers import as_cov_matrix

HALF_PI = math.pi / 2.0

# ==================================================================================================
# SECTION 1: FISSION CORRELATION AND TYPE I ERROR
# ==================================================================================================

def rho_fission(spec: BiasSpec) -> float:
    """Cor(X1, X2) for one-component fission with plug-in variance b2 instead of sigma2."""
    s2, b2, tau = spec.sigma2, spec.b2, spec.tau
    return (s2 - b2) / math.sqrt((s2 + tau ** 2 * b2) * (s2 + b2 / tau ** 2))


def _noncentrality(rho: float, n: int) -> float:
    if rho * rho >= HALF_PI:
        raise DomainError(f"rho^2 must be < pi/2, got rho={rho}")
    return rho * math.sqrt(n) / math.sqrt(HALF_PI - rho * rho)


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha}")


def type1_z(rho: float, n: int, alpha: float) -> float:
    """
    Two-sided rejection probability of a statistic distributed N(delta, 1),
    delta = rho sqrt(n) / sqrt(pi/2 - rho^2), against the N(0, 1) critical value.
    Assumes two equal clusters split exactly at the mean.
    """
    if n < 2:
        raise ParameterError(f"n must be >= 2, got {n}")
    _check_alpha(alpha)
    delta = _noncentrality(rho, n)
    q = float(special.ndtri(1.0 - alpha / 2.0))
    if delta == 0.0:
        return float(2.0 * special.ndtr(-q))
    return float(1.0 - special.ndtr(q - delta) + special.ndtr(-q - delta))


def type1_t(rho: float, n: int, alpha: float) -> float:
    """Student variant of type1_z: noncentral t with n - 2 degrees of freedom."""
    if n < 3:
        raise ParameterError(f"n must be >= 3 for the Student variant, got {n}")
    _check_alpha(alpha)
    delta = _noncentrality(rho, n)
    df = float(n - 2)
    q = float(special.stdtrit(df, 1.0 - alpha / 2.0))
    if delta == 0.0:
        return float(1.0 - special.stdtr(df, q) + special.stdtr(df, -q))
    return float(1.0 - noncentral_t_cdf(q, df, delta) + noncentral_t_cdf(-q, df, delta))


def type1(rho: float, n: int, alpha: float, variant: Type1Variant = Type1Variant.STUDENT_T) -> float:
    if Type1Variant(variant) == Type1Variant.Z:
        return type1_z(rho, n, alpha)
    return type1_t(rho, n, alpha)


def noncentral_t_cdf(x: float, df: float, delta: float) -> float:
    """
    P(T <= x) for T = (Z + delta) / S, S = sqrt(V / df), V ~ chi^2(df):
    integral of Phi(x s - delta) against the density of S.
    """
    if not df > 0:
        raise ParameterError(f"df must be > 0, got {df}")
    if np.isinf(x):
        return 1.0 if x > 0 else 0.0

    scaled_chi = stats.chi(df, scale=1.0 / math.sqrt(df))
    lower = float(scaled_chi.ppf(1e-15))
    upper = float(scaled_chi.isf(1e-15))

    def integrand(s: float) -> float:
        return float(special.ndtr(x * s - delta) * scaled_chi.pdf(s))

    value, error = integrate.quad(integrand, lower, upper, epsabs=1e-11, epsrel=1e-11, limit=400)
    if not np.isfinite(value) or error > 1e-8:
        raise ConvergenceError(f"noncentral t integral did not converge (x={x}, df={df}, delta={delta}, err={error:.2e})")
    return float(min(1.0, max(0.0, value)))


def type1_curve(
    relative_biases: Sequence[float],
    n: int,
    alpha: float = 0.05,
    variant: Type1Variant = Type1Variant.STUDENT_T,
    sigma2: float = 1.0,
    tau: float = 1.0,
) -> Type1Curve:
    grid = []
    for bias in relative_biases:
        rho = rho_fission(BiasSpec.from_relative_bias(sigma2, bias, tau))
        grid.append((float(bias), type1(rho, n, alpha, variant)))
    return Type1Curve(grid=grid, n=n, alpha=alpha, variant=variant, sigma2=sigma2, tau=tau)


# ==================================================================================================
# SECTION 2: COVARIANCE IDENTITIES
# ==================================================================================================

def _gaussian_only(spec: MixtureSpec) -> None:
    if spec.family != Family.GAUSSIAN:
        raise ParameterError("covariance identities need a Gaussian mixture")


def _component_means(spec: MixtureSpec) -> np.ndarray:
    return np.vstack([c.mean_array() for c in spec.components])


def cov_conditional_fission(spec: MixtureSpec) -> np.ndarray:
    """Cov(X1, X2) under conditional fission: the covariance of the component means."""
    _gaussian_only(spec)
    weights = spec.weights_array()
    means = _component_means(spec)
    centered = means - weights @ means
    return (centered * weights[:, None]).T @ centered


def mixture_marginal_cov(spec: MixtureSpec) -> np.ndarray:
    """Law of total variance: sum_g pi_g Sigma_g plus the covariance of the component means."""
    _gaussian_only(spec)
    weights = spec.weights_array()
    within = sum(w * c.cov_array() for w, c in zip(weights, spec.components))
    return within + cov_conditional_fission(spec)


def _paired(a, b):
    left = as_cov_matrix(a)
    right = as_cov_matrix(b)
    if left.shape != right.shape:
        raise DimMismatchError(f"covariance shapes differ: {left.shape} vs {right.shape}")
    return left, right


def cov_marginal_fission_conditional(sigma_g, sigma) -> np.ndarray:
    """Within-component Cov(X1, X2) when the marginal covariance is plugged in."""
    sigma_g, sigma = _paired(sigma_g, sigma)
    return sigma_g - sigma


def cov_prop1(sigma, sigma_hat) -> np.ndarray:
    sigma, sigma_hat = _paired(sigma, sigma_hat)
    return sigma - sigma_hat


def cov_nb_thin(mu: float, theta: float, theta_hat: float, tau: float) -> float:
    """Cov(X1, X2) of NB thinning with plug-in theta_hat instead of theta."""
    if mu <= 0 or theta <= 0 or theta_hat <= 0:
        raise ParameterError("mu, theta and theta_hat must be > 0")
    if not 0.0 < tau < 1.0:
        raise ParameterError(f"tau must lie in (0, 1), got {tau}")
    return tau * (1.0 - tau) * (mu ** 2 / theta) * (1.0 - (theta + 1.0) / (theta_hat + 1.0))


class CovarianceRow(BaseModel):
    mode: str = Field(description="'conditional' or 'marginal' fission.")
    scope: str = Field(description="'overall' or 'within'.")
    component: Optional[int] = Field(default=None, description="1-based component for within rows.")
    cov: List[List[float]]


def covariance_summary(spec: MixtureSpec) -> List[CovarianceRow]:
    """Predicted Cov(X1, X2) overall and within each component, under both fission modes."""
    _gaussian_only(spec)
    p = spec.dim
    zero = np.zeros((p, p))
    marginal = mixture_marginal_cov(spec)
    rows = [CovarianceRow(mode="conditional", scope="overall", cov=cov_conditional_fission(spec).tolist())]
    rows += [
        CovarianceRow(mode="conditional", scope="within", component=g, cov=zero.tolist())
        for g in range(1, spec.n_components + 1)
    ]
    rows.append(CovarianceRow(mode="marginal", scope="overall", cov=zero.tolist()))
    rows += [
        CovarianceRow(
            mode="marginal", scope="within", component=g,
            cov=cov_marginal_fission_conditional(c.cov_array(), marginal).tolist(),
        )
        for g, c in enumerate(spec.components, start=1)
    ]
    return rows


# ==================================================================================================
# SECTION 3: TWO-CLUSTER SPLIT MOMENTS
# ==================================================================================================

class HalfNormalMoments(NamedTuple):
    mean_upper: float
    mean_lower: float
    var_within: float


def halfnormal_cluster_moments(mu: float, sigma2_x1: float) -> HalfNormalMoments:
    """Means and variance of the two halves of N(mu, sigma2) split at mu."""
    if not sigma2_x1 > 0:
        raise ParameterError(f"sigma2 must be > 0, got {sigma2_x1}")
    shift = math.sqrt(2.0 * sigma2_x1 / math.pi)
    return HalfNormalMoments(mu + shift, mu - shift, (1.0 - 2.0 / math.pi) * sigma2_x1)


def within_cluster_variance_x2(spec: BiasSpec) -> float:
    """Var(X2 | cluster) = Var(X2) (1 - (2/pi) rho^2) for the split of X1 at its mean."""
    var_x2 = spec.sigma2 + spec.b2 / spec.tau ** 2
    rho = rho_fission(spec)
    return var_x2 * (1.0 - (2.0 / math.pi) * rho ** 2)
