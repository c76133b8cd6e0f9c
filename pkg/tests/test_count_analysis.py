import numpy as np
import pytest

from core.count_io import CountMatrix
from core.errors import LabelError
from core.samplers import sample_nb
from graph.count_analysis import AnalysisOptions, analyze_counts
from graph.scenarios import ClusteringScope

N_PER_POP = 100
SIGNAL, NULL = 20, 20


@pytest.fixture(scope="module")
def two_population_counts():
    columns = []
    for j in range(SIGNAL):
        columns.append(np.r_[sample_nb(5.0, 5.0, N_PER_POP, seed=j), sample_nb(15.0, 10.0, N_PER_POP, seed=1000 + j)])
    for j in range(NULL):
        columns.append(np.r_[sample_nb(5.0, 5.0, N_PER_POP, seed=2000 + j), sample_nb(5.0, 5.0, N_PER_POP, seed=3000 + j)])
    values = np.column_stack(columns).astype(np.int64)
    genes = [f"sig{j}" for j in range(SIGNAL)] + [f"null{j}" for j in range(NULL)]
    cells = [f"cell{i}" for i in range(2 * N_PER_POP)]
    labels = [1] * N_PER_POP + [2] * N_PER_POP
    return CountMatrix(values=values, cell_ids=cells, gene_ids=genes), labels


def test_conditional_theta_controls_null_genes_and_keeps_power(two_population_counts):
    counts, labels = two_population_counts
    report = analyze_counts(counts, AnalysisOptions(labels=labels, seed=5), verbose=False)
    assert [r.gene_id for r in report.rows] == counts.gene_ids

    signal = np.array([r.p_value for r in report.rows[:SIGNAL]])
    null = np.array([r.p_value for r in report.rows[SIGNAL:]])
    assert np.mean(signal <= 0.05) >= 0.8, "signal genes should be detected"
    assert np.mean(null <= 0.05) <= 0.25, "null genes should stay near the nominal level"

    first = report.rows[0]
    assert first.theta_conditional is not None and len(first.theta_conditional.split(";")) == 2
    assert first.reference_p is not None and first.reference_p < 1e-3
    assert report.ari is not None


def test_marginal_theta_without_labels(two_population_counts):
    counts, _ = two_population_counts
    report = analyze_counts(counts, AnalysisOptions(seed=6, clustering_scope=ClusteringScope.MULTIVARIATE), verbose=False)
    assert all(r.theta_conditional is None and r.ari is None for r in report.rows)
    assert 0.0 <= report.rejection_rate <= 1.0
    assert report.rows[0].cor_first_gene is not None


def test_analysis_is_reproducible(two_population_counts):
    counts, labels = two_population_counts
    subset = counts.subset(genes=[0, 1, SIGNAL, SIGNAL + 1])
    a = analyze_counts(subset, AnalysisOptions(labels=labels, seed=7), verbose=False)
    b = analyze_counts(subset, AnalysisOptions(labels=labels, seed=7), verbose=False)
    assert [r.p_value for r in a.rows] == [r.p_value for r in b.rows]


def test_label_count_must_match_cells(two_population_counts):
    counts, _ = two_population_counts
    with pytest.raises(LabelError):
        analyze_counts(counts, AnalysisOptions(labels=[1, 2, 1]), verbose=False)


def test_all_zero_gene_is_reported_untested(two_population_counts):
    counts, labels = two_population_counts
    values = np.column_stack([counts.values[:, :3], np.zeros(counts.n_cells, dtype=np.int64)])
    with_zero = CountMatrix(values=values, cell_ids=counts.cell_ids, gene_ids=counts.gene_ids[:3] + ["empty"])
    report = analyze_counts(with_zero, AnalysisOptions(labels=labels, seed=6, kmeans_restarts=2), verbose=False)

    empty = report.rows[-1]
    assert empty.gene_id == "empty"
    assert empty.p_value is None
    assert empty.status in ("untestable", "single_cluster")
    assert report.untested >= 1
    assert all(r.status == "tested" and r.p_value is not None for r in report.rows[:3])
