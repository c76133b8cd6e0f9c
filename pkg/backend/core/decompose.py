from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from core.estimate import empirical_cross_cov
from core.errors import DecompositionError, LabelError, NegativeCountError, ParameterError
from core.models import DecompositionMethod, Family, MixtureSpec, PluginMode
from core.samplers import _betabin_draws, as_cov_matrix, psd_cholesky, sample_mixture
from core.theory import mixture_marginal_cov
from core.utilities import derive_seed, make_rng

CovLike = Union[np.ndarray, Sequence]

# ==================================================================================================
# SECTION 1: SCALE PLUG-INS AND RESULT TYPE
# ==================================================================================================

@dataclass(frozen=True)
class ScalePlugin:
    """
    Scale parameter used by a decomposition.
    Marginal: one covariance / one theta vector for every row.
    Conditional: one entry per component, row i uses entry labels[i] - 1.
    """
    mode: PluginMode
    gaussian_cov: Optional[Union[np.ndarray, List[np.ndarray]]] = None
    nb_theta: Optional[Union[float, np.ndarray, List[np.ndarray]]] = None
    labels: Optional[np.ndarray] = None

    @classmethod
    def marginal_cov(cls, cov: CovLike) -> "ScalePlugin":
        return cls(mode=PluginMode.MARGINAL, gaussian_cov=as_cov_matrix(cov))

    @classmethod
    def conditional_cov(cls, covs: Sequence[CovLike], labels: Sequence[int]) -> "ScalePlugin":
        return cls(
            mode=PluginMode.CONDITIONAL,
            gaussian_cov=[as_cov_matrix(c) for c in covs],
            labels=np.asarray(labels, dtype=np.int64),
        )

    @classmethod
    def marginal_theta(cls, theta: Union[float, Sequence[float]]) -> "ScalePlugin":
        return cls(mode=PluginMode.MARGINAL, nb_theta=np.asarray(theta, dtype=float))

    @classmethod
    def conditional_theta(cls, thetas: Sequence[Union[float, Sequence[float]]], labels: Sequence[int]) -> "ScalePlugin":
        return cls(
            mode=PluginMode.CONDITIONAL,
            nb_theta=[np.asarray(t, dtype=float) for t in thetas],
            labels=np.asarray(labels, dtype=np.int64),
        )

    def row_components(self, n: int, n_params: int) -> np.ndarray:
        """0-based parameter index of every row (Conditional mode only)."""
        if self.labels is None:
            raise LabelError("conditional plug-in requires labels")
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.shape != (n,):
            raise LabelError(f"expected {n} labels, got shape {labels.shape}")
        if labels.size and (labels.min() < 1 or labels.max() > n_params):
            raise LabelError(f"labels must lie in 1..{n_params}, got range [{labels.min()}, {labels.max()}]")
        return labels - 1


@dataclass(frozen=True)
class FissionPair:
    x1: np.ndarray
    x2: np.ndarray
    tau: float
    method: DecompositionMethod
    plugin_mode: PluginMode


def _as_matrix(x) -> np.ndarray:
    arr = np.asarray(x)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ParameterError(f"expected an n x p matrix, got shape {arr.shape}")
    return arr


def _restore_shape(original, arr: np.ndarray) -> np.ndarray:
    return arr[:, 0] if np.ndim(original) == 1 else arr


# ==================================================================================================
# SECTION 2: GAUSSIAN FISSION AND THINNING
# ==================================================================================================

def _gaussian_noise(x: np.ndarray, plugin: ScalePlugin, rng: np.random.Generator) -> np.ndarray:
    """W with row i ~ N(0, Sigma_plugin(i)); rows are filled component by component."""
    n, p = x.shape
    if plugin.gaussian_cov is None:
        raise DecompositionError("Gaussian decomposition needs a covariance plug-in")

    if plugin.mode == PluginMode.MARGINAL:
        chol = psd_cholesky(as_cov_matrix(plugin.gaussian_cov, dim=p))
        return rng.standard_normal((n, p)) @ chol.T

    covs = plugin.gaussian_cov
    if isinstance(covs, np.ndarray) and covs.ndim == 2:
        covs = [covs]
    index = plugin.row_components(n, len(covs))
    noise = np.zeros((n, p), dtype=float)
    for g, cov in enumerate(covs):
        rows = np.flatnonzero(index == g)
        if rows.size == 0:
            continue
        chol = psd_cholesky(as_cov_matrix(cov, dim=p))
        noise[rows] = rng.standard_normal((rows.size, p)) @ chol.T
    return noise


def gaussian_fission(x, tau: float, plugin: ScalePlugin, seed: int) -> FissionPair:
    """x1 = x + tau W, x2 = x - W / tau with W drawn from the plug-in covariance."""
    if not tau > 0:
        raise ParameterError(f"fission tau must be > 0, got {tau}")
    mat = _as_matrix(x).astype(float)
    w = _gaussian_noise(mat, plugin, make_rng(seed))
    x1 = mat + tau * w
    x2 = mat - w / tau
    return FissionPair(
        x1=_restore_shape(x, x1), x2=_restore_shape(x, x2), tau=float(tau),
        method=DecompositionMethod.GAUSS_FISSION, plugin_mode=plugin.mode,
    )


def gaussian_thin(x, tau2: float, plugin: ScalePlugin, seed: int) -> FissionPair:
    """x1 | x ~ N(tau2 x, tau2 (1 - tau2) Sigma_plugin); x2 = x - x1."""
    if not 0.0 < tau2 < 1.0:
        raise ParameterError(f"thinning tau2 must lie in (0, 1), got {tau2}")
    mat = _as_matrix(x).astype(float)
    w = _gaussian_noise(mat, plugin, make_rng(seed))
    x1 = tau2 * mat + np.sqrt(tau2 * (1.0 - tau2)) * w
    x2 = mat - x1
    return FissionPair(
        x1=_restore_shape(x, x1), x2=_restore_shape(x, x2), tau=float(tau2),
        method=DecompositionMethod.GAUSS_THIN, plugin_mode=plugin.mode,
    )


def gaussian_fission_conditional_covcheck(
    spec: MixtureSpec,
    tau: float,
    n: int,
    seed: int,
    mode: PluginMode = PluginMode.CONDITIONAL,
) -> Tuple[np.ndarray, List[np.ndarray]]:
    """
    Samples the mixture, fissions it with the true parameters and returns the empirical
    Cov(x1, x2) overall and within every true component. Components with fewer than
    two rows get a NaN matrix.
    """
    if spec.family != Family.GAUSSIAN:
        raise ParameterError("covariance check needs a Gaussian mixture")
    sample = sample_mixture(spec, n, derive_seed(seed, "sample"))
    if mode == PluginMode.CONDITIONAL:
        plugin = ScalePlugin.conditional_cov([c.cov_array() for c in spec.components], sample.labels)
    else:
        plugin = ScalePlugin.marginal_cov(mixture_marginal_cov(spec))
    pair = gaussian_fission(sample.data, tau, plugin, derive_seed(seed, "fission"))

    overall = empirical_cross_cov(pair.x1, pair.x2)
    within = []
    for g in range(1, spec.n_components + 1):
        rows = sample.labels == g
        if rows.sum() < 2:
            within.append(np.full((spec.dim, spec.dim), np.nan))
        else:
            within.append(empirical_cross_cov(pair.x1[rows], pair.x2[rows]))
    return overall, within


# ==================================================================================================
# SECTION 3: COUNT THINNING
# ==================================================================================================

def _as_counts(x) -> np.ndarray:
    mat = _as_matrix(x)
    if mat.size and np.any(mat < 0):
        raise NegativeCountError("thinning requires non-negative counts")
    if not np.issubdtype(mat.dtype, np.integer):
        if mat.size and np.any(mat != np.round(mat)):
            raise ParameterError("thinning requires integer counts")
    return mat.astype(np.int64)


def poisson_thin(x, tau: float, seed: int) -> FissionPair:
    """Entrywise x1 ~ Binomial(x, tau), x2 = x - x1."""
    if not 0.0 <= tau <= 1.0:
        raise ParameterError(f"Poisson thinning tau must lie in [0, 1], got {tau}")
    counts = _as_counts(x)
    x1 = make_rng(seed).binomial(counts, tau).astype(np.int64)
    x2 = counts - x1
    return FissionPair(
        x1=_restore_shape(x, x1), x2=_restore_shape(x, x2), tau=float(tau),
        method=DecompositionMethod.POISSON_THIN, plugin_mode=PluginMode.MARGINAL,
    )


def _theta_matrix(plugin: ScalePlugin, n: int, p: int) -> np.ndarray:
    if plugin.nb_theta is None:
        raise ParameterError("NB thinning needs a theta plug-in")

    if plugin.mode == PluginMode.MARGINAL:
        theta = np.broadcast_to(np.asarray(plugin.nb_theta, dtype=float), (p,))
        theta = np.broadcast_to(theta[None, :], (n, p))
    else:
        per_component = plugin.nb_theta
        if not isinstance(per_component, list):
            per_component = [per_component]
        index = plugin.row_components(n, len(per_component))
        table = np.vstack([np.broadcast_to(np.asarray(t, dtype=float), (p,)) for t in per_component])
        theta = table[index]

    if np.any(~(theta > 0)):
        raise ParameterError("NB thinning theta must be > 0 everywhere")
    return theta


def nb_thin(x, tau: float, plugin: ScalePlugin, seed: int) -> FissionPair:
    """Entrywise x1 ~ BetaBin(x, tau theta, (1 - tau) theta), x2 = x - x1."""
    if not 0.0 < tau < 1.0:
        raise ParameterError(f"NB thinning tau must lie in (0, 1), got {tau}")
    counts = _as_counts(x)
    theta = _theta_matrix(plugin, *counts.shape)
    x1 = _betabin_draws(make_rng(seed), counts, tau * theta, (1.0 - tau) * theta)
    x2 = counts - x1
    return FissionPair(
        x1=_restore_shape(x, x1), x2=_restore_shape(x, x2), tau=float(tau),
        method=DecompositionMethod.NB_THIN, plugin_mode=plugin.mode,
    )


def decompose(x, method: DecompositionMethod, tau: float, seed: int, plugin: Optional[ScalePlugin] = None) -> FissionPair:
    """Dispatch on method; Poisson thinning ignores the plug-in."""
    method = DecompositionMethod(method)
    if method == DecompositionMethod.POISSON_THIN:
        return poisson_thin(x, tau, seed)
    if plugin is None:
        raise ParameterError(f"{method.value} needs a scale plug-in")
    if method == DecompositionMethod.GAUSS_FISSION:
        return gaussian_fission(x, tau, plugin, seed)
    if method == DecompositionMethod.GAUSS_THIN:
        return gaussian_thin(x, tau, plugin, seed)
    return nb_thin(x, tau, plugin, seed)
