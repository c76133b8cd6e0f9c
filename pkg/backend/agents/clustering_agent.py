import numpy as np

from core.cluster import kmeans, kmeans_univariate
from core.replicate_state import ReplicateState
from core.stattest import adjusted_rand_index
from core.utilities import C_ACTION, C_RED, C_RESET, C_YELLOW, derive_seed, trace
from graph.scenarios import ClusteringScope


class ClusteringAgent:
    """k-means on X1, jointly (multivariate) or one variable at a time (univariate)."""

    def __init__(self, agent_id: str = "clustering_agent"):
        self.id = agent_id

    def execute(self, state: ReplicateState) -> ReplicateState:
        state.setdefault("visited_nodes", []).append(self.id)
        cfg = state["config"]
        trace(f"{C_ACTION}[{self.id.upper()} START] k={cfg.k_cluster} scope={cfg.clustering_scope.value}{C_RESET}")

        try:
            seed = derive_seed(state["seed"], "cluster")
            options = {"restarts": cfg.kmeans_restarts, "max_iter": cfg.kmeans_max_iter, "tol": cfg.kmeans_tol}
            if cfg.clustering_scope == ClusteringScope.MULTIVARIATE:
                fits = [kmeans(state["x1"], cfg.k_cluster, seed=seed, **options)]
            else:
                fits = kmeans_univariate(state["x1"], cfg.k_cluster, seed=seed, **options)
            state["cluster_labels"] = [fit.labels for fit in fits]

            truth = state["true_labels"]
            if cfg.mixture.n_components > 1:
                state["ari"] = float(np.mean([adjusted_rand_index(fit.labels, truth) for fit in fits]))
            else:
                state["ari"] = None
            state["clustered"] = True
            trace(f"{C_YELLOW}[{self.id.upper()} STATE] {len(fits)} clustering(s), ARI={state['ari']}{C_RESET}")
        except Exception as exc:
            state.update({"error": f"{type(exc).__name__}: {exc}", "failed_stage": self.id, "exception": exc})
            trace(f"{C_RED}[{self.id.upper()} ERROR] {exc}{C_RESET}")

        state["next"] = "supervisor_agent"
        return state
