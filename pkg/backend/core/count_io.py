import csv
import json
import os
import time
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field
from scipy import io as scipy_io
from scipy.sparse import coo_matrix

from core.errors import (
    DuplicateIdError,
    LengthMismatchError,
    NegativeEntryError,
    ParameterError,
    ParseError,
    RangeError,
)
from core.stattest import wilcoxon_rank_sum
from core.utilities import ARTIFACT_VERSION

# ==================================================================================================
# SECTION 1: COUNT MATRIX
# ==================================================================================================

class CountFormat(str, Enum):
    CSV = "csv"
    MATRIX_MARKET = "mtx"


class ResultFormat(str, Enum):
    CSV = "csv"
    JSONL = "jsonl"


@dataclass(frozen=True)
class CountMatrix:
    """Cells x genes non-negative integer counts with unique cell and gene ids."""
    values: np.ndarray
    cell_ids: List[str]
    gene_ids: List[str]

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape != (len(self.cell_ids), len(self.gene_ids)):
            raise LengthMismatchError(
                f"values shape {self.values.shape} does not match {len(self.cell_ids)} cells x {len(self.gene_ids)} genes"
            )
        _check_unique(self.cell_ids, "cell id")
        _check_unique(self.gene_ids, "gene id")
        if self.values.size and self.values.min() < 0:
            raise NegativeEntryError("count matrix contains negative entries")

    @property
    def n_cells(self) -> int:
        return len(self.cell_ids)

    @property
    def n_genes(self) -> int:
        return len(self.gene_ids)

    def subset(self, cells: Optional[Sequence[int]] = None, genes: Optional[Sequence[int]] = None) -> "CountMatrix":
        rows = np.arange(self.n_cells) if cells is None else np.asarray(cells, dtype=int)
        cols = np.arange(self.n_genes) if genes is None else np.asarray(genes, dtype=int)
        return CountMatrix(
            values=self.values[np.ix_(rows, cols)],
            cell_ids=[self.cell_ids[i] for i in rows],
            gene_ids=[self.gene_ids[j] for j in cols],
        )

    def transposed(self) -> "CountMatrix":
        return CountMatrix(values=self.values.T.copy(), cell_ids=list(self.gene_ids), gene_ids=list(self.cell_ids))


def _check_unique(ids: Sequence[str], kind: str) -> None:
    seen = set()
    for item in ids:
        if item in seen:
            raise DuplicateIdError(item, kind)
        seen.add(item)


# ==================================================================================================
# SECTION 2: READING AND WRITING COUNTS
# ==================================================================================================

def _parse_count(cell: str, line: int) -> int:
    text = cell.strip()
    try:
        value = int(text)
    except ValueError:
        try:
            as_float = float(text)
        except ValueError:
            raise ParseError(f"'{cell}' is not a count", line) from None
        if not as_float.is_integer():
            raise ParseError(f"'{cell}' is not an integer count", line) from None
        value = int(as_float)
    if value < 0:
        raise NegativeEntryError(f"line {line}: negative count {value}")
    return value


def _read_csv(path: str) -> CountMatrix:
    """Rows are cells; first column cell id; header row gene ids."""
    try:
        frame = pd.read_csv(path, dtype=str, header=None, keep_default_na=False)
    except pd.errors.EmptyDataError as exc:
        raise ParseError("empty count file", 1) from exc
    except pd.errors.ParserError as exc:
        raise ParseError(f"malformed CSV: {exc}") from exc

    if frame.shape[0] < 1 or frame.shape[1] < 2:
        raise ParseError("expected a header row and at least one gene column", 1)
    header = [h.strip() for h in frame.iloc[0, 1:].tolist()]
    _check_unique(header, "gene id")

    cell_ids: List[str] = []
    values = np.zeros((frame.shape[0] - 1, len(header)), dtype=np.int64)
    for i in range(1, frame.shape[0]):
        line = i + 1
        row = frame.iloc[i].tolist()
        if any(not isinstance(c, str) or c.strip() == "" for c in row):
            raise ParseError("missing field", line)
        cell_ids.append(row[0].strip())
        values[i - 1] = [_parse_count(c, line) for c in row[1:]]
    return CountMatrix(values=values, cell_ids=cell_ids, gene_ids=header)


def _sidecar(path: str, suffix: str) -> str:
    stem = path[:-4] if path.endswith(".mtx") else path
    return f"{stem}.{suffix}.txt"


def _read_ids(path: str) -> List[str]:
    if not os.path.isfile(path):
        raise ParseError(f"missing id sidecar file {path}")
    with open(path, "r", encoding="utf-8") as handle:
        return [line.strip() for line in handle if line.strip()]


def _read_matrix_market(path: str) -> CountMatrix:
    """Coordinate MatrixMarket (cells x genes) with <stem>.cells.txt / <stem>.genes.txt sidecars."""
    try:
        matrix = scipy_io.mmread(path)
    except (ValueError, IndexError, OSError) as exc:
        raise ParseError(f"malformed MatrixMarket file {path}: {exc}") from exc
    dense = matrix.toarray() if hasattr(matrix, "toarray") else np.asarray(matrix)
    if dense.size and np.any(dense < 0):
        raise NegativeEntryError("MatrixMarket file contains negative entries")
    if dense.size and np.any(dense != np.round(dense)):
        raise ParseError("MatrixMarket entries must be integer counts")
    return CountMatrix(
        values=dense.astype(np.int64),
        cell_ids=_read_ids(_sidecar(path, "cells")),
        gene_ids=_read_ids(_sidecar(path, "genes")),
    )


def read_counts(path: str, fmt: Union[CountFormat, str, None] = None, transpose: bool = False) -> CountMatrix:
    """Reads a count matrix; `transpose` accepts genes-as-rows files."""
    if fmt is None:
        fmt = CountFormat.MATRIX_MARKET if path.endswith(".mtx") else CountFormat.CSV
    fmt = CountFormat(fmt)
    if not os.path.isfile(path):
        raise ParseError(f"count file not found: {path}")
    matrix = _read_csv(path) if fmt == CountFormat.CSV else _read_matrix_market(path)
    return matrix.transposed() if transpose else matrix


def write_counts(m: CountMatrix, path: str, fmt: Union[CountFormat, str] = CountFormat.CSV) -> None:
    fmt = CountFormat(fmt)
    if fmt == CountFormat.CSV:
        frame = pd.DataFrame(m.values, index=pd.Index(m.cell_ids, name="cell_id"), columns=m.gene_ids)
        frame.to_csv(path, lineterminator="\n")
        return
    scipy_io.mmwrite(path, coo_matrix(m.values), field="integer")
    target = path if path.endswith(".mtx") else f"{path}.mtx"
    for suffix, ids in (("cells", m.cell_ids), ("genes", m.gene_ids)):
        with open(_sidecar(target, suffix), "w", encoding="utf-8", newline="\n") as handle:
            handle.write("\n".join(ids) + "\n")


def read_labels(path: str, cell_ids: Sequence[str]) -> np.ndarray:
    """Two-column CSV (cell_id,label) aligned to `cell_ids`; labels are integers >= 1."""
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    if frame.shape[1] < 2:
        raise ParseError("labels file needs cell_id and label columns", 1)
    lookup: Dict[str, int] = {}
    for i, (cell, label) in enumerate(zip(frame.iloc[:, 0], frame.iloc[:, 1]), start=2):
        if cell in lookup:
            raise DuplicateIdError(cell, "cell id")
        lookup[cell] = _parse_count(label, i)
    missing = [c for c in cell_ids if c not in lookup]
    if missing:
        raise LengthMismatchError(f"{len(missing)} cell(s) have no label, e.g. '{missing[0]}'")
    return np.array([lookup[c] for c in cell_ids], dtype=np.int64)


# ==================================================================================================
# SECTION 3: GENE AND CELL FILTERS
# ==================================================================================================

@dataclass(frozen=True)
class MinVariance:
    threshold: float


@dataclass(frozen=True)
class TopVariable:
    k: int


GeneRule = Union[MinVariance, TopVariable]


def gene_variances(m: CountMatrix) -> np.ndarray:
    if m.n_cells < 2:
        return np.zeros(m.n_genes)
    return m.values.astype(float).var(axis=0, ddof=1)


def filter_genes(m: CountMatrix, rule: GeneRule) -> CountMatrix:
    """MinVariance drops genes below the threshold; TopVariable keeps the k most variable (ties by gene id)."""
    variances = gene_variances(m)
    if isinstance(rule, MinVariance):
        keep = [j for j in range(m.n_genes) if variances[j] >= rule.threshold]
        return m.subset(genes=keep)
    if not 0 <= rule.k <= m.n_genes:
        raise RangeError(f"TopVariable k must lie in [0, {m.n_genes}], got {rule.k}")
    order = sorted(range(m.n_genes), key=lambda j: (-variances[j], m.gene_ids[j]))
    chosen = set(order[:rule.k])
    return m.subset(genes=[j for j in range(m.n_genes) if j in chosen])


def filter_cells(m: CountMatrix, max_zero_frac: float) -> CountMatrix:
    """Removes cells whose fraction of zero counts exceeds max_zero_frac."""
    if not 0.0 <= max_zero_frac <= 1.0:
        raise RangeError(f"max_zero_frac must lie in [0, 1], got {max_zero_frac}")
    if m.n_genes == 0:
        return m
    zero_frac = (m.values == 0).mean(axis=1)
    return m.subset(cells=np.flatnonzero(zero_frac <= max_zero_frac))


def split_signal_and_null_genes(m: CountMatrix, labels: Sequence[int], n_each: int) -> Tuple[List[str], List[str]]:
    """
    Ranks genes by rank-sum p-value between label classes 1 and 2 on the raw counts.
    Returns the n_each smallest-p (signal) and n_each largest-p (null) gene ids.
    """
    labels = np.asarray(labels)
    if labels.shape[0] != m.n_cells:
        raise LengthMismatchError(f"{labels.shape[0]} labels for {m.n_cells} cells")
    if not 0 <= 2 * n_each <= m.n_genes:
        raise RangeError(f"cannot take {n_each} signal and {n_each} null genes from {m.n_genes}")
    first, second = labels == 1, labels == 2
    p = np.array([wilcoxon_rank_sum(m.values[first, j], m.values[second, j]).p_value for j in range(m.n_genes)])
    order = sorted(range(m.n_genes), key=lambda j: (p[j], m.gene_ids[j]))
    signal = [m.gene_ids[j] for j in order[:n_each]]
    null = [m.gene_ids[j] for j in order[len(order) - n_each:]] if n_each else []
    return signal, null


# ==================================================================================================
# SECTION 4: RESULT TABLES AND MANIFEST
# ==================================================================================================

def _row_dict(row: Any) -> Dict[str, Any]:
    return row.model_dump() if isinstance(row, BaseModel) else dict(row)


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        # repr is the shortest string that parses back to the same double
        return repr(float(value))
    return str(value)


def write_results(rows: Iterable[Any], path: str, fmt: Union[ResultFormat, str] = ResultFormat.CSV,
                  columns: Optional[List[str]] = None) -> None:
    """
    Tidy UTF-8 output with LF endings; CSV floats use their shortest round-trip form.
    An empty row set still writes the header, so it needs explicit columns.
    """
    fmt = ResultFormat(fmt)
    records = [_row_dict(r) for r in rows]
    if columns is None:
        if not records:
            raise ParameterError(f"no rows for {path}: pass columns to write a header-only table")
        columns = list(records[0].keys())
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)

    if fmt == ResultFormat.JSONL:
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            for record in records:
                handle.write(json.dumps({c: record.get(c) for c in columns}, default=_cell) + "\n")
        return

    frame = pd.DataFrame([[_cell(r.get(c)) for c in columns] for r in records], columns=columns, dtype=object)
    frame.to_csv(path, index=False, lineterminator="\n", encoding="utf-8", quoting=csv.QUOTE_MINIMAL)


def _coerce(text: str) -> Any:
    if text == "":
        return None
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def read_results(path: str, fmt: Union[ResultFormat, str] = ResultFormat.CSV) -> List[Dict[str, Any]]:
    fmt = ResultFormat(fmt)
    if fmt == ResultFormat.JSONL:
        with open(path, "r", encoding="utf-8") as handle:
            return [json.loads(line) for line in handle if line.strip()]
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    return [{c: _coerce(v) for c, v in record.items()} for record in frame.to_dict(orient="records")]


class RunManifest(BaseModel):
    """Everything needed to re-run a CLI invocation bit for bit."""
    command: str
    config: Dict[str, Any] = Field(description="Echo of the scenario / analysis options.")
    master_seed: int
    artifact_version: str = ARTIFACT_VERSION
    started_at: float = Field(default_factory=time.time)
    wall_clock_seconds: float = 0.0
    row_counts: Dict[str, int] = Field(default_factory=dict)
    design_flags: Dict[str, str] = Field(default_factory=lambda: {
        "relative_bias": "(b2 - sigma2) / sigma2",
        "correlated_counts": "gaussian copula, equicorrelated latent normals",
        "nb_mle": "profile likelihood, grid + bounded Brent on log theta",
        "rejection_rule": "p <= alpha",
    })


def write_manifest(manifest: RunManifest, path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(manifest.model_dump_json(indent=2) + "\n")
