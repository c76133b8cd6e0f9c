from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, Field

from core.cluster import kmeans, kmeans_univariate
from core.count_io import CountMatrix
from core.decompose import ScalePlugin, nb_thin
from core.errors import DataError, LabelError, PipelineError
from core.estimate import nb_theta_columns
from core.stattest import adjusted_rand_index, rejection_rate, wilcoxon_rank_sum
from core.utilities import C_ACTION, C_GREEN, C_RESET, DEFAULT_SEED, derive_seed
from agents.testing_agent import TestingAgent, select_largest_pair
from graph.scenarios import ClusteringScope


class AnalysisOptions(BaseModel):
    tau: float = Field(default=0.5, gt=0.0, lt=1.0, description="NB thinning parameter.")
    k_cluster: int = Field(default=2, ge=2)
    clustering_scope: ClusteringScope = ClusteringScope.UNIVARIATE
    labels: Optional[List[int]] = Field(default=None, description="True cell populations (1-based); switches to conditional theta.")
    alpha: float = Field(default=0.05, gt=0.0, lt=1.0)
    seed: int = Field(default=DEFAULT_SEED, ge=0)
    kmeans_restarts: int = Field(default=10, ge=1)


class GeneRow(BaseModel):
    gene_id: str
    theta_hat: float = Field(description="Marginal overdispersion MLE over all cells.")
    theta_conditional: Optional[str] = Field(default=None, description="Per-population MLEs, ';'-joined.")
    p_value: Optional[float] = Field(default=None, description="Empty when the gene could not be tested (see status).")
    status: str = Field(default="tested", description="'tested', 'single_cluster' or 'untestable' (no spread in X2 across the pair).")
    ari: Optional[float] = None
    reference_p: Optional[float] = Field(default=None, description="Rank-sum p between true populations on raw counts.")
    cor_first_gene: Optional[float] = Field(default=None, description="Cor(X1 of the first gene, X2 of this gene).")


@dataclass
class AnalysisReport:
    rows: List[GeneRow] = field(default_factory=list)
    rejection_rate: float = 0.0
    ari: Optional[float] = None
    untested: int = 0


def _correlation(a: np.ndarray, b: np.ndarray) -> Optional[float]:
    if a.std() == 0 or b.std() == 0:
        return None
    return float(np.corrcoef(a, b)[0, 1])


def analyze_counts(m: CountMatrix, options: AnalysisOptions, verbose: bool = True) -> AnalysisReport:
    """
    Thins every gene with its own theta_hat (marginal, or per population when labels are
    given), clusters X1 and rank-sum tests the two largest clusters on X2, gene by gene.
    """
    counts = m.values
    labels = None if options.labels is None else np.asarray(options.labels, dtype=np.int64)
    if labels is not None and labels.shape[0] != m.n_cells:
        raise LabelError(f"{labels.shape[0]} labels for {m.n_cells} cells")
    if verbose:
        mode = "conditional" if labels is not None else "marginal"
        print(f"{C_ACTION}[ANALYZE START] {m.n_cells} cells x {m.n_genes} genes, {mode} theta, {options.clustering_scope.value} clustering{C_RESET}")

    try:
        theta_marginal = nb_theta_columns(counts)
        conditional = None
        if labels is None:
            plugin = ScalePlugin.marginal_theta(theta_marginal)
        else:
            classes = range(1, int(labels.max()) + 1)
            conditional = [nb_theta_columns(counts[labels == g]) if np.sum(labels == g) >= 2 else theta_marginal
                           for g in classes]
            plugin = ScalePlugin.conditional_theta(conditional, labels)
        pair = nb_thin(counts, options.tau, plugin, derive_seed(options.seed, "decompose"))
    except DataError as exc:
        raise PipelineError("decompose", {"tau": options.tau}, exc) from exc

    x1 = pair.x1.astype(float)
    x2 = pair.x2.astype(float)
    seed = derive_seed(options.seed, "cluster")
    if options.clustering_scope == ClusteringScope.MULTIVARIATE:
        shared = kmeans(x1, options.k_cluster, restarts=options.kmeans_restarts, seed=seed).labels
        labelings = [shared] * m.n_genes
    else:
        labelings = [f.labels for f in kmeans_univariate(x1, options.k_cluster, seed, restarts=options.kmeans_restarts)]

    report = AnalysisReport()
    for j, gene in enumerate(m.gene_ids):
        cluster_labels = labelings[j]
        chosen = select_largest_pair(cluster_labels, options.k_cluster)
        status, p_value = "single_cluster", None
        if chosen is not None:
            p = TestingAgent.p_value(x2[cluster_labels == chosen[0], j], x2[cluster_labels == chosen[1], j], "wilcoxon")
            status, p_value = ("untestable", None) if np.isnan(p) else ("tested", p)

        row = GeneRow(
            gene_id=gene,
            theta_hat=float(theta_marginal[j]),
            p_value=p_value,
            status=status,
            cor_first_gene=_correlation(x1[:, 0], x2[:, j]),
        )
        if labels is not None:
            row.theta_conditional = ";".join(repr(float(t[j])) for t in conditional)
            row.ari = adjusted_rand_index(cluster_labels, labels)
            if np.any(labels == 1) and np.any(labels == 2):
                row.reference_p = wilcoxon_rank_sum(counts[labels == 1, j], counts[labels == 2, j]).p_value
        report.rows.append(row)

    tested = [r.p_value for r in report.rows if r.p_value is not None]
    report.untested = len(report.rows) - len(tested)
    report.rejection_rate = rejection_rate(tested, options.alpha) if tested else 0.0
    aris = [r.ari for r in report.rows if r.ari is not None]
    report.ari = float(np.mean(aris)) if aris else None
    if verbose:
        print(f"{C_GREEN}[ANALYZE DONE] rejection rate {report.rejection_rate:.4f} at alpha={options.alpha}, {report.untested} gene(s) untested{C_RESET}")
    return report
