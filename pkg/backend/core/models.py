import math
from enum import Enum
from typing import List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from core.utilities import SYMMETRY_TOLERANCE

# ==================================================================================================
# SECTION 1: ENUMERATIONS
# ==================================================================================================

class Family(str, Enum):
    GAUSSIAN = "gaussian"
    NEGBIN = "negbin"


class PluginMode(str, Enum):
    MARGINAL = "marginal"
    CONDITIONAL = "conditional"


class DecompositionMethod(str, Enum):
    GAUSS_FISSION = "gauss_fission"
    GAUSS_THIN = "gauss_thin"
    POISSON_THIN = "poisson_thin"
    NB_THIN = "nb_thin"


class TestMethod(str, Enum):
    __test__ = False  # not a pytest class

    T_POOLED = "t_pooled"
    T_WELCH = "t_welch"
    WILCOXON = "wilcoxon"


class Type1Variant(str, Enum):
    Z = "z"
    STUDENT_T = "t"


# ==================================================================================================
# SECTION 2: MIXTURE DESCRIPTION
# ==================================================================================================

class GaussianComponent(BaseModel):
    """One Gaussian component N(mean, cov)."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    mean: List[float] = Field(description="Component mean vector (length p).")
    cov: List[List[float]] = Field(description="Component covariance matrix (p x p).")

    @model_validator(mode="after")
    def _check_shapes(self) -> "GaussianComponent":
        p = len(self.mean)
        if p < 1:
            raise ValueError("mean must have at least one entry")
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (p, p):
            raise ValueError(f"cov must be {p}x{p}, got shape {cov.shape}")
        scale = max(1.0, float(np.abs(cov).max()))
        if float(np.abs(cov - cov.T).max()) > SYMMETRY_TOLERANCE * scale:
            raise ValueError("cov must be symmetric")
        return self

    @property
    def dim(self) -> int:
        return len(self.mean)

    def mean_array(self) -> np.ndarray:
        return np.asarray(self.mean, dtype=float)

    def cov_array(self) -> np.ndarray:
        return np.asarray(self.cov, dtype=float)


class NBComponent(BaseModel):
    """One negative binomial component with per-variable mean and overdispersion."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    mu: List[float] = Field(description="Per-variable mean, all > 0.")
    theta: List[float] = Field(description="Per-variable overdispersion, all > 0.")

    @model_validator(mode="after")
    def _check_params(self) -> "NBComponent":
        if len(self.mu) < 1 or len(self.mu) != len(self.theta):
            raise ValueError("mu and theta must be non-empty and of equal length")
        if any(m <= 0 for m in self.mu) or any(t <= 0 for t in self.theta):
            raise ValueError("NB mu and theta must be strictly positive")
        return self

    @property
    def dim(self) -> int:
        return len(self.mu)

    def mu_array(self) -> np.ndarray:
        return np.asarray(self.mu, dtype=float)

    def theta_array(self) -> np.ndarray:
        return np.asarray(self.theta, dtype=float)


class MixtureSpec(BaseModel):
    """Full generative description of a G-component Gaussian or NB mixture."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    family: Family
    weights: List[float] = Field(description="Mixing proportions, sum to 1.")
    components: List[Union[GaussianComponent, NBComponent]]

    @field_validator("weights")
    @classmethod
    def _check_weights(cls, weights: List[float]) -> List[float]:
        if not weights:
            raise ValueError("at least one mixture component is required")
        if any(w < 0 for w in weights):
            raise ValueError("mixture weights must be non-negative")
        if abs(math.fsum(weights) - 1.0) > 1e-12:
            raise ValueError(f"mixture weights must sum to 1, got {math.fsum(weights)!r}")
        return weights

    @model_validator(mode="after")
    def _check_components(self) -> "MixtureSpec":
        if len(self.components) != len(self.weights):
            raise ValueError("one weight per component is required")
        expected = GaussianComponent if self.family == Family.GAUSSIAN else NBComponent
        if not all(isinstance(c, expected) for c in self.components):
            raise ValueError(f"{self.family.value} mixture requires {expected.__name__} components")
        dims = {c.dim for c in self.components}
        if len(dims) != 1:
            raise ValueError(f"all components must share one dimension, got {sorted(dims)}")
        return self

    @property
    def n_components(self) -> int:
        return len(self.components)

    @property
    def dim(self) -> int:
        return self.components[0].dim

    def weights_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)

    # --- Convenience constructors ---
    @classmethod
    def gaussian(cls, weights: List[float], means: List[List[float]], covs: List[List[List[float]]]) -> "MixtureSpec":
        comps = [GaussianComponent(mean=list(m), cov=[list(r) for r in c]) for m, c in zip(means, covs)]
        return cls(family=Family.GAUSSIAN, weights=list(weights), components=comps)

    @classmethod
    def negbin(cls, weights: List[float], mus: List[List[float]], thetas: List[List[float]]) -> "MixtureSpec":
        comps = [NBComponent(mu=list(m), theta=list(t)) for m, t in zip(mus, thetas)]
        return cls(family=Family.NEGBIN, weights=list(weights), components=comps)


# ==================================================================================================
# SECTION 3: TEST AND THEORY RECORDS
# ==================================================================================================

class TestReport(BaseModel):
    """Statistic, two-sided p-value and method metadata for one two-sample test."""
    __test__ = False

    statistic: float
    p_value: float = Field(ge=0.0, le=1.0)
    method: TestMethod
    n1: int
    n2: int
    df: Optional[float] = None


class BiasSpec(BaseModel):
    """True variance, plugged-in variance and fission parameter of the one-component setting."""
    model_config = ConfigDict(frozen=True)

    sigma2: float = Field(gt=0, description="True variance sigma^2.")
    b2: float = Field(gt=0, description="Variance used as the fission plug-in.")
    tau: float = Field(gt=0, description="Fission parameter.")

    @property
    def relative_bias(self) -> float:
        return (self.b2 - self.sigma2) / self.sigma2

    @classmethod
    def from_relative_bias(cls, sigma2: float, relative_bias: float, tau: float) -> "BiasSpec":
        return cls(sigma2=sigma2, b2=sigma2 * (1.0 + relative_bias), tau=tau)


class Type1Curve(BaseModel):
    grid: List[Tuple[float, float]] = Field(description="(relative_bias, alpha_hat) pairs.")
    n: int
    alpha: float
    variant: Type1Variant
    sigma2: float = 1.0
    tau: float = 1.0
    bias_definition: str = "(b2 - sigma2) / sigma2"
