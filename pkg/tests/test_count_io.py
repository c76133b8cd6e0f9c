import json

import numpy as np
import pytest

from core.count_io import (
    CountMatrix,
    MinVariance,
    RunManifest,
    TopVariable,
    filter_cells,
    filter_genes,
    gene_variances,
    read_counts,
    read_labels,
    read_results,
    split_signal_and_null_genes,
    write_counts,
    write_manifest,
    write_results,
)
from core.errors import (
    DuplicateIdError,
    LengthMismatchError,
    NegativeEntryError,
    ParameterError,
    ParseError,
    RangeError,
)


def _matrix():
    values = np.array([[0, 5, 1], [3, 0, 1], [9, 2, 1], [0, 0, 1]], dtype=np.int64)
    return CountMatrix(values=values, cell_ids=["c1", "c2", "c3", "c4"], gene_ids=["g1", "g2", "g3"])


# ==================================================================================================
# Count matrices
# ==================================================================================================

def test_csv_write_then_read(tmp_path):
    path = tmp_path / "counts.csv"
    write_counts(_matrix(), str(path))
    back = read_counts(str(path))
    assert back.cell_ids == ["c1", "c2", "c3", "c4"]
    assert back.gene_ids == ["g1", "g2", "g3"]
    assert np.array_equal(back.values, _matrix().values)


def test_matrix_market_with_sidecars(tmp_path):
    path = tmp_path / "counts.mtx"
    write_counts(_matrix(), str(path), "mtx")
    assert (tmp_path / "counts.cells.txt").read_text().split() == ["c1", "c2", "c3", "c4"]
    back = read_counts(str(path))
    assert np.array_equal(back.values, _matrix().values)
    assert back.gene_ids == ["g1", "g2", "g3"]


def test_transposed_input(tmp_path):
    path = tmp_path / "genes_by_cells.csv"
    path.write_text("gene,cA,cB\nx,1,2\ny,3,4\nz,5,6\n")
    m = read_counts(str(path), transpose=True)
    assert m.cell_ids == ["cA", "cB"]
    assert m.gene_ids == ["x", "y", "z"]
    assert m.values.tolist() == [[1, 3, 5], [2, 4, 6]]


@pytest.mark.parametrize("body,error,line", [
    ("id,g1,g2\nc1,1,x\n", ParseError, 2),
    ("id,g1,g2\nc1,1,2\nc2,1.5,2\n", ParseError, 3),
    ("id,g1,g2\nc1,1,2\nc2,3\n", ParseError, 3),
])
def test_malformed_rows_report_their_line(tmp_path, body, error, line):
    path = tmp_path / "bad.csv"
    path.write_text(body)
    with pytest.raises(error) as info:
        read_counts(str(path))
    assert info.value.line == line


def test_negative_and_duplicate_entries(tmp_path):
    negative = tmp_path / "neg.csv"
    negative.write_text("id,g1\nc1,-2\n")
    with pytest.raises(NegativeEntryError):
        read_counts(str(negative))
    duplicate = tmp_path / "dup.csv"
    duplicate.write_text("id,g1,g1\nc1,1,2\n")
    with pytest.raises(DuplicateIdError):
        read_counts(str(duplicate))
    with pytest.raises(ParseError):
        read_counts(str(tmp_path / "missing.csv"))


def test_labels_are_aligned_to_cell_order(tmp_path):
    path = tmp_path / "labels.csv"
    path.write_text("cell_id,label\nc3,2\nc1,1\nc4,2\nc2,1\n")
    labels = read_labels(str(path), ["c1", "c2", "c3", "c4"])
    assert labels.tolist() == [1, 1, 2, 2]
    with pytest.raises(LengthMismatchError):
        read_labels(str(path), ["c1", "c9"])


# ==================================================================================================
# Filters
# ==================================================================================================

def test_top_variable_selects_largest_variances():
    rng = np.random.default_rng(61)
    scales = np.array([1, 8, 2, 20, 5, 3])
    values = rng.poisson(scales, size=(200, 6)).astype(np.int64) * scales
    m = CountMatrix(values=values, cell_ids=[f"c{i}" for i in range(200)], gene_ids=[f"g{j}" for j in range(6)])
    expected = [m.gene_ids[j] for j in np.argsort(-gene_variances(m))[:3]]
    kept = filter_genes(m, TopVariable(3))
    assert sorted(kept.gene_ids) == sorted(expected)
    with pytest.raises(RangeError):
        filter_genes(m, TopVariable(7))


def test_min_variance_and_zero_fraction_filters():
    m = _matrix()
    assert filter_genes(m, MinVariance(0.5)).gene_ids == ["g1", "g2"]
    # c4 has two zeros out of three genes
    assert filter_cells(m, 0.5).cell_ids == ["c1", "c2", "c3"]
    assert filter_cells(m, 1.0).n_cells == 4


def test_signal_and_null_gene_split():
    rng = np.random.default_rng(62)
    labels = np.repeat([1, 2], 100)
    shifted = np.r_[rng.poisson(5, 100), rng.poisson(30, 100)]
    flat = rng.poisson(5, 200)
    m = CountMatrix(values=np.column_stack([flat, shifted]).astype(np.int64), cell_ids=[f"c{i}" for i in range(200)],
                    gene_ids=["flat", "shifted"])
    signal, null = split_signal_and_null_genes(m, labels, 1)
    assert signal == ["shifted"] and null == ["flat"]


# ==================================================================================================
# Result tables and manifest
# ==================================================================================================

def test_result_rows_round_trip_exact_floats(tmp_path):
    rows = [{"metric": "rejection_rate", "value": 0.1 + 0.2, "se": None, "n": 50}]
    path = tmp_path / "summary.csv"
    write_results(rows, str(path))
    text = path.read_bytes()
    assert b"\r\n" not in text
    back = read_results(str(path))
    assert back == [{"metric": "rejection_rate", "value": 0.1 + 0.2, "se": None, "n": 50}]

    jsonl = tmp_path / "summary.jsonl"
    write_results(rows, str(jsonl), "jsonl")
    assert read_results(str(jsonl), "jsonl")[0]["value"] == 0.1 + 0.2

def test_empty_result_table_keeps_its_header(tmp_path):
    path = tmp_path / "empty.csv"
    write_results([], str(path), columns=["metric", "value"])
    assert path.read_text(encoding="utf-8") == "metric,value\n"
    assert read_results(str(path)) == []

    with pytest.raises(ParameterError):
        write_results([], str(tmp_path / "headless.csv"))



def test_manifest_records_seed_and_design_flags(tmp_path):
    manifest = RunManifest(command="simulate", config={"name": "demo"}, master_seed=7)
    path = tmp_path / "out" / "manifest.json"
    write_manifest(manifest, str(path))
    data = json.loads(path.read_text())
    assert data["master_seed"] == 7
    assert data["design_flags"]["rejection_rule"] == "p <= alpha"
