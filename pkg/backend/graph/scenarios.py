import os
from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from core.errors import ParameterError
from core.models import Family, MixtureSpec, TestMethod
from core.utilities import DEFAULT_SEED, derive_seed


class ScenarioKind(str, Enum):
    IDEAL_GAUSSIAN = "ideal_gaussian"
    ADVERSE_GAUSSIAN = "adverse_gaussian"
    BIAS_SWEEP = "bias_sweep"
    NB_MIXTURE_SPLIT = "nb_mixture_split"
    NB_CORRELATED = "nb_correlated"
    TWO_POPULATION_SYNTHETIC = "two_population_synthetic"


# Kinds whose comparison pair is two clusters carved out of one true component
SPURIOUS_SPLIT_KINDS = {ScenarioKind.ADVERSE_GAUSSIAN, ScenarioKind.NB_MIXTURE_SPLIT}


class FissionMode(str, Enum):
    MARGINAL = "marginal"
    CONDITIONAL_ORACLE = "conditional_oracle"
    CONDITIONAL_ESTIMATED = "conditional_estimated"


class ClusteringScope(str, Enum):
    MULTIVARIATE = "multivariate"
    UNIVARIATE = "univariate"


# ==================================================================================================
# SECTION 1: GRID POINTS
# ==================================================================================================

class GridPoint(BaseModel):
    """One coordinate of the experiment grid."""
    model_config = ConfigDict(frozen=True)

    tau: float
    n: int
    bias: float = 0.0
    rho: float = 0.0
    mode: FissionMode = FissionMode.MARGINAL

    @property
    def data_key(self) -> str:
        # mode is left out so every mode of a replicate sees the same draw
        return f"tau={self.tau!r}|n={self.n}|bias={self.bias!r}|rho={self.rho!r}"

    def replicate_seed(self, master_seed: int, replicate: int) -> int:
        return derive_seed(master_seed, self.data_key, replicate)

    def as_dict(self) -> Dict[str, object]:
        return {"tau": self.tau, "n": self.n, "bias": self.bias, "rho": self.rho, "mode": self.mode.value}


# ==================================================================================================
# SECTION 2: SCENARIO CONFIGURATION
# ==================================================================================================

class ScenarioConfig(BaseModel):
    """Complete, JSON-serialisable description of one simulation experiment."""
    model_config = ConfigDict(extra="forbid")

    name: str = Field(description="Scenario name used in output rows.")
    kind: ScenarioKind
    mixture: MixtureSpec = Field(description="Generative mixture; for nb_correlated the per-component marginals.")
    tau_grid: List[float] = Field(min_length=1, description="Fission (Gaussian) or thinning (NB) parameters.")
    n_grid: List[int] = Field(min_length=1, description="Sample sizes.")
    bias_grid: Optional[List[float]] = Field(default=None, description="Relative bias applied to the plug-in scale.")
    rho_grid: Optional[List[float]] = Field(default=None, description="Latent equicorrelation between variables.")
    k_cluster: int = Field(ge=1, description="Number of k-means clusters fitted on X1.")
    fission_mode: FissionMode = FissionMode.MARGINAL
    mode_grid: Optional[List[FissionMode]] = Field(default=None, description="Several modes in one run; overrides fission_mode.")
    test: TestMethod
    extra_tests: List[TestMethod] = Field(default_factory=list, description="Further tests applied to the same X2.")
    replicates: int = Field(ge=1)
    alpha: float = Field(default=0.05, gt=0.0, lt=1.0)
    master_seed: int = Field(default=DEFAULT_SEED, ge=0, le=2**64 - 1)
    clustering_scope: ClusteringScope = ClusteringScope.MULTIVARIATE
    target_components: Tuple[int, int] = Field(default=(1, 2), description="True components compared in power runs.")
    test_variable: int = Field(default=0, ge=0, description="Column tested in multivariate scope.")
    kmeans_restarts: int = Field(default=10, ge=1)
    kmeans_max_iter: int = Field(default=300, ge=1)
    kmeans_tol: float = Field(default=1e-6, gt=0.0)

    @model_validator(mode="after")
    def _check_grids(self) -> "ScenarioConfig":
        is_count = self.mixture.family == Family.NEGBIN
        for tau in self.tau_grid:
            if is_count and not 0.0 < tau < 1.0:
                raise ValueError(f"NB thinning tau must lie in (0, 1), got {tau}")
            if not tau > 0.0:
                raise ValueError(f"fission tau must be > 0, got {tau}")
        if any(n < 2 for n in self.n_grid):
            raise ValueError("every sample size must be >= 2")
        if any(n < self.k_cluster for n in self.n_grid):
            raise ValueError("every sample size must be >= k_cluster")
        if self.bias_grid is not None and (not self.bias_grid or any(b <= -1.0 for b in self.bias_grid)):
            raise ValueError("bias_grid must be nonempty with every relative bias > -1")
        if self.rho_grid is not None and (not self.rho_grid or any(not 0.0 <= r < 1.0 for r in self.rho_grid)):
            raise ValueError("rho_grid must be nonempty with every rho in [0, 1)")
        if self.mode_grid is not None and not self.mode_grid:
            raise ValueError("mode_grid must be nonempty when given")
        g = self.mixture.n_components
        targets = self.target_components
        if self.kind == ScenarioKind.IDEAL_GAUSSIAN and (any(not 1 <= t <= g for t in targets) or targets[0] == targets[1]):
            raise ValueError(f"target_components must be two distinct components in 1..{g}")
        if self.test_variable >= self.mixture.dim:
            raise ValueError(f"test_variable {self.test_variable} out of range for dimension {self.mixture.dim}")
        return self

    @property
    def modes(self) -> List[FissionMode]:
        return list(self.mode_grid) if self.mode_grid else [self.fission_mode]

    @property
    def tests(self) -> List[TestMethod]:
        ordered = [self.test]
        for t in self.extra_tests:
            if t not in ordered:
                ordered.append(t)
        return ordered

    def points(self) -> List[GridPoint]:
        """Grid in fixed order: mode, tau, n, bias, rho."""
        return [
            GridPoint(tau=tau, n=n, bias=bias, rho=rho, mode=mode)
            for mode in self.modes
            for tau in self.tau_grid
            for n in self.n_grid
            for bias in (self.bias_grid or [0.0])
            for rho in (self.rho_grid or [0.0])
        ]

    def with_overrides(self, replicates: Optional[int] = None, seed: Optional[int] = None,
                       extra_tests: Optional[List[TestMethod]] = None) -> "ScenarioConfig":
        update = {}
        if replicates is not None:
            update["replicates"] = replicates
        if seed is not None:
            update["master_seed"] = seed
        if extra_tests:
            update["extra_tests"] = list(self.extra_tests) + [t for t in extra_tests if t not in self.extra_tests]
        return self.model_validate(self.model_copy(update=update).model_dump())


# ==================================================================================================
# SECTION 3: BUILTIN SCENARIOS
# ==================================================================================================

FISSION_TAU_GRID = [round(0.1 * i, 1) for i in range(1, 16)]
BIAS_SWEEP_N_GRID = [50, 100, 200, 500, 1000]
BIAS_SWEEP_GRID = [-0.5, -0.2, -0.1, 0.0, 0.1, 0.2, 0.5]
CORRELATION_GRID = [0.0, 0.3, 0.6, 0.9]
CORRELATION_BIAS_GRID = [-0.5, -0.25, 0.0, 0.25, 0.5]

TWO_POP_GENES = 250


def _identity(p: int, scale: float = 1.0) -> List[List[float]]:
    return [[scale if i == j else 0.0 for j in range(p)] for i in range(p)]


def _bias_sweep(name: str, sigma2: float, n_grid: List[int]) -> ScenarioConfig:
    return ScenarioConfig(
        name=name,
        kind=ScenarioKind.BIAS_SWEEP,
        mixture=MixtureSpec.gaussian([1.0], [[0.0]], [[[sigma2]]]),
        tau_grid=[1.0],
        n_grid=n_grid,
        bias_grid=BIAS_SWEEP_GRID,
        k_cluster=2,
        fission_mode=FissionMode.CONDITIONAL_ORACLE,
        test=TestMethod.T_POOLED,
        replicates=1000,
    )


def _two_population(name: str, scope: ClusteringScope) -> ScenarioConfig:
    # genes 0..249 shift between populations, genes 250..499 do not
    mus_a = [5.0] * (2 * TWO_POP_GENES)
    thetas_a = [5.0] * (2 * TWO_POP_GENES)
    mus_b = [15.0] * TWO_POP_GENES + [5.0] * TWO_POP_GENES
    thetas_b = [10.0] * TWO_POP_GENES + [5.0] * TWO_POP_GENES
    return ScenarioConfig(
        name=name,
        kind=ScenarioKind.TWO_POPULATION_SYNTHETIC,
        mixture=MixtureSpec.negbin([0.5, 0.5], [mus_a, mus_b], [thetas_a, thetas_b]),
        tau_grid=[0.5],
        n_grid=[200],
        k_cluster=2,
        mode_grid=[FissionMode.MARGINAL, FissionMode.CONDITIONAL_ORACLE, FissionMode.CONDITIONAL_ESTIMATED],
        test=TestMethod.WILCOXON,
        replicates=100,
        clustering_scope=scope,
        kmeans_restarts=3,
    )


def builtin_scenarios() -> Dict[str, ScenarioConfig]:
    third = 1.0 / 3.0
    scenarios = [
        ScenarioConfig(
            name="fig1_ideal",
            kind=ScenarioKind.IDEAL_GAUSSIAN,
            mixture=MixtureSpec.gaussian(
                [third, third, 1.0 - 2.0 * third],
                [[0.0, 0.0], [5.0, 5.0], [-5.0, 5.0]],
                [_identity(2)] * 3,
            ),
            tau_grid=FISSION_TAU_GRID,
            n_grid=[50, 100, 200, 500],
            k_cluster=3,
            mode_grid=[FissionMode.MARGINAL, FissionMode.CONDITIONAL_ORACLE],
            test=TestMethod.T_POOLED,
            replicates=1000,
        ),
        ScenarioConfig(
            name="fig2_adverse",
            kind=ScenarioKind.ADVERSE_GAUSSIAN,
            mixture=MixtureSpec.gaussian([1.0], [[0.0, 0.0]], [_identity(2)]),
            tau_grid=FISSION_TAU_GRID,
            n_grid=[50, 100, 200, 500],
            k_cluster=2,
            mode_grid=[FissionMode.MARGINAL, FissionMode.CONDITIONAL_ORACLE],
            test=TestMethod.T_POOLED,
            replicates=1000,
        ),
        # unequal component variances, where a marginal plug-in misses both components
        ScenarioConfig(
            name="fig2_adverse_heteroscedastic",
            kind=ScenarioKind.ADVERSE_GAUSSIAN,
            mixture=MixtureSpec.gaussian([0.5, 0.5], [[0.0, 0.0], [8.0, 8.0]], [_identity(2), _identity(2, 2.0)]),
            tau_grid=FISSION_TAU_GRID,
            n_grid=[50, 100, 200, 500],
            k_cluster=3,
            mode_grid=[FissionMode.MARGINAL, FissionMode.CONDITIONAL_ORACLE],
            test=TestMethod.T_POOLED,
            replicates=1000,
        ),
        _bias_sweep("figS1_bias", 1.0, BIAS_SWEEP_N_GRID),
        _bias_sweep("figS1_sigma2_0.5", 0.5, [500]),
        _bias_sweep("figS1_sigma2_2", 2.0, [500]),
        _bias_sweep("figS1_sigma2_4", 4.0, [500]),
        ScenarioConfig(
            name="fig3_nb",
            kind=ScenarioKind.NB_MIXTURE_SPLIT,
            mixture=MixtureSpec.negbin([0.5, 0.5], [[5.0], [60.0]], [[5.0], [40.0]]),
            tau_grid=[0.5],
            n_grid=[100],
            k_cluster=3,
            mode_grid=[FissionMode.MARGINAL, FissionMode.CONDITIONAL_ORACLE, FissionMode.CONDITIONAL_ESTIMATED],
            test=TestMethod.WILCOXON,
            replicates=1000,
        ),
        ScenarioConfig(
            name="fig3c_multivariate",
            kind=ScenarioKind.NB_CORRELATED,
            mixture=MixtureSpec.negbin([1.0], [[5.0] * 50], [[10.0] * 50]),
            tau_grid=[0.5],
            n_grid=[100],
            bias_grid=CORRELATION_BIAS_GRID,
            rho_grid=CORRELATION_GRID,
            k_cluster=2,
            fission_mode=FissionMode.CONDITIONAL_ORACLE,
            test=TestMethod.WILCOXON,
            replicates=1000,
        ),
        ScenarioConfig(
            name="fig3c_gaussian",
            kind=ScenarioKind.NB_CORRELATED,
            mixture=MixtureSpec.gaussian([1.0], [[0.0] * 50], [_identity(50)]),
            tau_grid=[1.0],
            n_grid=[100],
            bias_grid=CORRELATION_BIAS_GRID,
            rho_grid=CORRELATION_GRID,
            k_cluster=2,
            fission_mode=FissionMode.CONDITIONAL_ORACLE,
            test=TestMethod.T_POOLED,
            replicates=1000,
        ),
        _two_population("a5_twopop", ClusteringScope.UNIVARIATE),
        _two_population("a5_twopop_multivariate", ClusteringScope.MULTIVARIATE),
    ]
    return {s.name: s for s in scenarios}


def load_scenario(name_or_path: str) -> ScenarioConfig:
    """Builtin scenario by name, or a JSON file mirroring ScenarioConfig field names."""
    builtins = builtin_scenarios()
    if name_or_path in builtins:
        return builtins[name_or_path]
    if not os.path.isfile(name_or_path):
        raise ParameterError(f"unknown scenario '{name_or_path}' (builtins: {', '.join(sorted(builtins))})")
    with open(name_or_path, "r", encoding="utf-8") as handle:
        text = handle.read()
    try:
        return ScenarioConfig.model_validate_json(text)
    except ValidationError as exc:
        raise ParameterError(f"invalid scenario config {name_or_path}: {exc}") from exc
