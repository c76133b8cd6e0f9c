from typing import List

import numpy as np

from core.decompose import FissionPair, ScalePlugin, gaussian_fission, nb_thin
from core.errors import InsufficientDataError
from core.estimate import empirical_cov, nb_theta_columns
from core.models import Family
from core.replicate_state import ReplicateState
from core.utilities import C_ACTION, C_RED, C_RESET, C_YELLOW, derive_seed, trace
from graph.scenarios import FissionMode


def _class_rows(labels: np.ndarray, g: int, minimum: int = 2) -> np.ndarray:
    rows = np.flatnonzero(labels == g)
    if 0 < rows.size < minimum:
        raise InsufficientDataError(f"class {g} has {rows.size} member(s); at least {minimum} are required")
    return rows


def build_plugin(family: Family, mode: FissionMode, data: np.ndarray, labels: np.ndarray,
                 scales: List[np.ndarray], bias: float) -> ScalePlugin:
    """
    Scale plug-in for one replicate. The relative bias multiplies the scale:
    covariance * (1 + bias) for Gaussian data, theta * (1 + bias) for counts.
    """
    factor = 1.0 + bias
    g_count = len(scales)

    if family == Family.GAUSSIAN:
        if mode == FissionMode.MARGINAL:
            return ScalePlugin.marginal_cov(empirical_cov(data) * factor)
        if mode == FissionMode.CONDITIONAL_ORACLE:
            return ScalePlugin.conditional_cov([s * factor for s in scales], labels)
        covs = []
        for g in range(1, g_count + 1):
            rows = _class_rows(labels, g)
            # absent classes are never indexed; keep the true scale as a placeholder
            covs.append(empirical_cov(data[rows]) * factor if rows.size else scales[g - 1])
        return ScalePlugin.conditional_cov(covs, labels)

    if mode == FissionMode.MARGINAL:
        return ScalePlugin.marginal_theta(nb_theta_columns(data) * factor)
    if mode == FissionMode.CONDITIONAL_ORACLE:
        return ScalePlugin.conditional_theta([s * factor for s in scales], labels)
    thetas = []
    for g in range(1, g_count + 1):
        rows = _class_rows(labels, g)
        thetas.append(nb_theta_columns(data[rows]) * factor if rows.size else scales[g - 1])
    return ScalePlugin.conditional_theta(thetas, labels)


class DecompositionAgent:
    """Splits the replicate into X1 (clustering) and X2 (testing) with the configured plug-in."""

    def __init__(self, agent_id: str = "decomposition_agent"):
        self.id = agent_id

    def execute(self, state: ReplicateState) -> ReplicateState:
        state.setdefault("visited_nodes", []).append(self.id)
        cfg, point = state["config"], state["point"]
        trace(f"{C_ACTION}[{self.id.upper()} START] mode={point.mode.value} tau={point.tau} bias={point.bias}{C_RESET}")

        try:
            pair = self.split(cfg.mixture.family, point, state, derive_seed(state["seed"], "decompose"))
            state["x1"] = pair.x1
            state["x2"] = pair.x2
            state["decomposed"] = True
            trace(f"{C_YELLOW}[{self.id.upper()} STATE] {pair.method.value} ({pair.plugin_mode.value} plug-in){C_RESET}")
        except Exception as exc:
            state.update({"error": f"{type(exc).__name__}: {exc}", "failed_stage": self.id, "exception": exc})
            trace(f"{C_RED}[{self.id.upper()} ERROR] {exc}{C_RESET}")

        state["next"] = "supervisor_agent"
        return state

    @staticmethod
    def split(family: Family, point, state: ReplicateState, seed: int) -> FissionPair:
        plugin = build_plugin(family, point.mode, state["data"], state["true_labels"], state["true_scales"], point.bias)
        if family == Family.GAUSSIAN:
            return gaussian_fission(state["data"], point.tau, plugin, seed)
        return nb_thin(state["data"], point.tau, plugin, seed)
