from typing import TypedDict, List, Dict, Any, Optional

import numpy as np


class ReplicateState(TypedDict, total=False):
    """
    Shared memory for one replicate of the sample -> decompose -> cluster -> test pipeline.
    Each agent fills its block and raises the matching completion flag; the Supervisor
    routes on those flags.
    """

    # --- Run Inputs ---
    config: Any                         # ScenarioConfig (graph/scenarios.py)
    point: Any                          # GridPoint being replicated
    replicate: int                      # Replicate index r
    seed: int                           # Replicate seed derived from (master_seed, point, r)

    # --- Sampling (sampling_agent.py) ---
    data: np.ndarray                    # n x p draw
    true_labels: np.ndarray             # latent component of each row, 1..G
    true_scales: List[np.ndarray]       # per-component covariance (Gaussian) or theta vector (NB) actually sampled from
    sampled: bool

    # --- Decomposition (decomposition_agent.py) ---
    x1: np.ndarray                      # part used for clustering
    x2: np.ndarray                      # part used for testing
    decomposed: bool

    # --- Clustering (clustering_agent.py) ---
    cluster_labels: List[np.ndarray]    # one label vector (multivariate) or one per variable (univariate)
    ari: Optional[float]
    clustered: bool

    # --- Testing (testing_agent.py) ---
    tested_variables: List[int]
    p_values: Dict[str, List[float]]    # test method -> p-value per tested variable
    pair_sizes: List[List[int]]         # sizes of the compared clusters, per tested variable
    unmatched: int                      # tested variables whose cluster pair could not be matched
    untestable: int                     # (variable, test) comparisons with no p-value: constant or too-small groups
    tested: bool

    # --- Failure Reporting ---
    error: Optional[str]
    failed_stage: Optional[str]
    exception: Optional[BaseException]

    # Internal routing/control fields
    next: str
    visited_nodes: List[str]
