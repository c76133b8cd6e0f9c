from typing import List, Tuple

import numpy as np

from core.models import Family, MixtureSpec
from core.replicate_state import ReplicateState
from core.samplers import (
    LabeledSample,
    equicorrelation_cov,
    sample_correlated_nb_mixture,
    sample_mixture,
)
from core.utilities import C_ACTION, C_RED, C_RESET, C_YELLOW, derive_seed, trace
from graph.scenarios import ScenarioKind


def equicorrelated_gaussian(spec: MixtureSpec, rho: float) -> MixtureSpec:
    """Same means and variances, every within-component correlation set to rho."""
    covs = [equicorrelation_cov(c.dim, rho, np.diag(c.cov_array())).tolist() for c in spec.components]
    return MixtureSpec.gaussian(spec.weights, [c.mean for c in spec.components], covs)


def true_scales(spec: MixtureSpec) -> List[np.ndarray]:
    if spec.family == Family.GAUSSIAN:
        return [c.cov_array() for c in spec.components]
    return [c.theta_array() for c in spec.components]


class SamplingAgent:
    """
    Draws the replicate's data set from the scenario mixture.
    nb_correlated scenarios get a common latent correlation rho between variables
    (Gaussian copula for counts, equicorrelated covariance for Gaussian data).
    """
    def __init__(self, agent_id: str = "sampling_agent"):
        self.id = agent_id

    def execute(self, state: ReplicateState) -> ReplicateState:
        state.setdefault("visited_nodes", []).append(self.id)
        cfg, point = state["config"], state["point"]
        trace(f"{C_ACTION}[{self.id.upper()} START] {cfg.name} r={state['replicate']} n={point.n} rho={point.rho}{C_RESET}")

        try:
            sample, scales = self.draw(cfg, point, derive_seed(state["seed"], "sample"))
            state["data"] = sample.data
            state["true_labels"] = sample.labels
            state["true_scales"] = scales
            state["sampled"] = True
            trace(f"{C_YELLOW}[{self.id.upper()} STATE] data shape {sample.data.shape}{C_RESET}")
        except Exception as exc:
            state.update({"error": f"{type(exc).__name__}: {exc}", "failed_stage": self.id, "exception": exc})
            trace(f"{C_RED}[{self.id.upper()} ERROR] {exc}{C_RESET}")

        state["next"] = "supervisor_agent"
        return state

    @staticmethod
    def draw(cfg, point, seed: int) -> Tuple[LabeledSample, List[np.ndarray]]:
        spec = cfg.mixture
        if cfg.kind != ScenarioKind.NB_CORRELATED:
            return sample_mixture(spec, point.n, seed), true_scales(spec)
        if spec.family == Family.NEGBIN:
            return sample_correlated_nb_mixture(spec, point.rho, point.n, seed), true_scales(spec)
        correlated = equicorrelated_gaussian(spec, point.rho)
        return sample_mixture(correlated, point.n, seed), true_scales(correlated)
