from typing import Dict, List, Optional, Tuple

import numpy as np

from core.errors import InsufficientDataError, ZeroVarianceError
from core.replicate_state import ReplicateState
from core.stattest import run_test
from core.utilities import C_ACTION, C_RED, C_RESET, C_YELLOW, trace
from graph.scenarios import SPURIOUS_SPLIT_KINDS, ClusteringScope, ScenarioKind

Pair = Tuple[int, int]


# ==================================================================================================
# SECTION 1: CLUSTER PAIR SELECTION
# ==================================================================================================

def majority_components(cluster_labels: np.ndarray, true_labels: np.ndarray, k: int) -> Dict[int, int]:
    """Cluster -> true component holding most of its members (ties to the lower component)."""
    mapping = {}
    for c in range(1, k + 1):
        members = true_labels[cluster_labels == c]
        if members.size:
            values, counts = np.unique(members, return_counts=True)
            mapping[c] = int(values[np.argmax(counts)])
    return mapping


def _by_size(clusters: List[int], sizes: np.ndarray) -> List[int]:
    return sorted(clusters, key=lambda c: (-int(sizes[c - 1]), c))


def select_spurious_pair(cluster_labels: np.ndarray, true_labels: np.ndarray, k: int) -> Optional[Pair]:
    """
    Two clusters carved out of the same true component: the two largest clusters of the
    component whose such pair is largest overall (ties by component index).
    """
    sizes = np.bincount(cluster_labels - 1, minlength=k)
    groups: Dict[int, List[int]] = {}
    for c, g in majority_components(cluster_labels, true_labels, k).items():
        groups.setdefault(g, []).append(c)

    best, best_size = None, -1
    for g in sorted(groups):
        if len(groups[g]) < 2:
            continue
        a, b = _by_size(groups[g], sizes)[:2]
        combined = int(sizes[a - 1] + sizes[b - 1])
        if combined > best_size:
            best, best_size = (min(a, b), max(a, b)), combined
    return best


def select_target_pair(cluster_labels: np.ndarray, true_labels: np.ndarray, k: int, targets: Pair) -> Optional[Pair]:
    """Largest cluster majority-matched to each target component; None when either is missing."""
    sizes = np.bincount(cluster_labels - 1, minlength=k)
    mapping = majority_components(cluster_labels, true_labels, k)
    chosen = []
    for g in targets:
        candidates = [c for c, comp in mapping.items() if comp == g]
        if not candidates:
            return None
        chosen.append(_by_size(candidates, sizes)[0])
    return chosen[0], chosen[1]


def select_largest_pair(cluster_labels: np.ndarray, k: int) -> Optional[Pair]:
    sizes = np.bincount(cluster_labels - 1, minlength=k)
    nonempty = [c for c in range(1, k + 1) if sizes[c - 1] > 0]
    if len(nonempty) < 2:
        return None
    a, b = _by_size(nonempty, sizes)[:2]
    return min(a, b), max(a, b)


def select_pair(kind: ScenarioKind, cluster_labels: np.ndarray, true_labels: np.ndarray, k: int, targets: Pair) -> Optional[Pair]:
    if kind in SPURIOUS_SPLIT_KINDS:
        return select_spurious_pair(cluster_labels, true_labels, k)
    if kind == ScenarioKind.IDEAL_GAUSSIAN:
        return select_target_pair(cluster_labels, true_labels, k, targets)
    return select_largest_pair(cluster_labels, k)


def tested_variables(cfg, p: int) -> List[int]:
    if cfg.kind == ScenarioKind.TWO_POPULATION_SYNTHETIC or cfg.clustering_scope == ClusteringScope.UNIVARIATE:
        return list(range(p))
    return [cfg.test_variable]


# ==================================================================================================
# SECTION 2: TESTING AGENT
# ==================================================================================================

class TestingAgent:
    """
    Compares the selected cluster pair on X2, once per tested variable and test method.
    Unmatched power pairs count as p = 1; unmatched null pairs are left out (NaN).
    Comparisons the test cannot score (constant or too-small groups) are NaN and counted as untestable.
    """
    __test__ = False

    def __init__(self, agent_id: str = "testing_agent"):
        self.id = agent_id

    def execute(self, state: ReplicateState) -> ReplicateState:
        state.setdefault("visited_nodes", []).append(self.id)
        cfg = state["config"]
        trace(f"{C_ACTION}[{self.id.upper()} START] tests={[t.value for t in cfg.tests]}{C_RESET}")

        try:
            self.run(state)
            state["tested"] = True
            trace(f"{C_YELLOW}[{self.id.upper()} STATE] {len(state['tested_variables'])} variable(s), unmatched={state['unmatched']}{C_RESET}")
        except Exception as exc:
            state.update({"error": f"{type(exc).__name__}: {exc}", "failed_stage": self.id, "exception": exc})
            trace(f"{C_RED}[{self.id.upper()} ERROR] {exc}{C_RESET}")

        state["next"] = "supervisor_agent"
        return state

    def run(self, state: ReplicateState) -> None:
        cfg = state["config"]
        x2 = np.asarray(state["x2"], dtype=float)
        if x2.ndim == 1:
            x2 = x2[:, None]
        truth = state["true_labels"]
        labelings = state["cluster_labels"]
        variables = tested_variables(cfg, x2.shape[1])

        p_values: Dict[str, List[float]] = {t.value: [] for t in cfg.tests}
        pair_sizes: List[List[int]] = []
        unmatched = 0
        untestable = 0
        for j in variables:
            labels = labelings[j] if len(labelings) > 1 else labelings[0]
            pair = select_pair(cfg.kind, labels, truth, cfg.k_cluster, tuple(cfg.target_components))
            if pair is None:
                unmatched += 1
                missing = 1.0 if cfg.kind == ScenarioKind.IDEAL_GAUSSIAN else float("nan")
                for t in cfg.tests:
                    p_values[t.value].append(missing)
                pair_sizes.append([0, 0])
                continue

            first, second = x2[labels == pair[0], j], x2[labels == pair[1], j]
            pair_sizes.append([int(first.size), int(second.size)])
            for t in cfg.tests:
                p = self.p_value(first, second, t)
                untestable += int(np.isnan(p))
                p_values[t.value].append(p)

        state["tested_variables"] = variables
        state["p_values"] = p_values
        state["pair_sizes"] = pair_sizes
        state["unmatched"] = unmatched
        state["untestable"] = untestable

    @staticmethod
    def p_value(first: np.ndarray, second: np.ndarray, method) -> float:
        """NaN when the pair cannot be scored: an empty group, or no spread in X2 across both groups."""
        pooled = np.concatenate([first, second])
        if first.size == 0 or second.size == 0 or np.ptp(pooled) == 0:
            return float("nan")
        try:
            return run_test(first, second, method).p_value
        except (ZeroVarianceError, InsufficientDataError):
            return float("nan")
