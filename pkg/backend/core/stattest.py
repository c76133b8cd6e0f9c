from typing import List, Sequence, Tuple

import numpy as np
from scipy import special, stats

from core.errors import InsufficientDataError, LengthMismatchError, RangeError, ZeroVarianceError
from core.models import TestMethod, TestReport

# ==================================================================================================
# SECTION 1: TWO-SAMPLE TESTS
# ==================================================================================================

def _vector(values: Sequence[float]) -> np.ndarray:
    return np.asarray(values, dtype=float).ravel()


def _clip_p(p: float) -> float:
    return float(min(1.0, max(0.0, p)))


def t_test(x: Sequence[float], y: Sequence[float], variant: TestMethod = TestMethod.T_POOLED) -> TestReport:
    """
    Two-sided two-sample t-test.
    Pooled: (m1 - m2) / sqrt(s_p^2 (1/n1 + 1/n2)), df = n1 + n2 - 2.
    Welch: unpooled standard error with Satterthwaite df.
    """
    variant = TestMethod(variant)
    if variant == TestMethod.WILCOXON:
        raise RangeError("t_test variant must be t_pooled or t_welch")
    a, b = _vector(x), _vector(y)
    n1, n2 = a.size, b.size
    if n1 < 2 or n2 < 2:
        raise InsufficientDataError(f"t-test needs at least 2 observations per sample, got {n1} and {n2}")

    v1, v2 = a.var(ddof=1), b.var(ddof=1)
    diff = a.mean() - b.mean()
    if variant == TestMethod.T_POOLED:
        df = float(n1 + n2 - 2)
        pooled = ((n1 - 1) * v1 + (n2 - 1) * v2) / df
        se2 = pooled * (1.0 / n1 + 1.0 / n2)
    else:
        q1, q2 = v1 / n1, v2 / n2
        se2 = q1 + q2
        df = float(se2 ** 2 / (q1 ** 2 / (n1 - 1) + q2 ** 2 / (n2 - 1))) if se2 > 0 else float("nan")

    if not se2 > 0:
        raise ZeroVarianceError("both samples are constant; the t statistic is undefined")
    statistic = float(diff / np.sqrt(se2))
    p_value = _clip_p(2.0 * special.stdtr(df, -abs(statistic)))
    return TestReport(statistic=statistic, p_value=p_value, method=variant, n1=n1, n2=n2, df=df)


def wilcoxon_rank_sum(x: Sequence[float], y: Sequence[float]) -> TestReport:
    """
    Rank-sum test with mid-ranks, tie-corrected variance and continuity correction.
    The reported statistic is the continuity-corrected z score of the x rank sum.
    """
    a, b = _vector(x), _vector(y)
    n1, n2 = a.size, b.size
    if n1 < 1 or n2 < 1:
        raise InsufficientDataError(f"rank-sum test needs nonempty samples, got {n1} and {n2}")

    total = n1 + n2
    ranks = stats.rankdata(np.concatenate([a, b]))
    rank_sum = float(ranks[:n1].sum())
    expected = n1 * (total + 1) / 2.0

    _, ties = np.unique(ranks, return_counts=True)
    tie_term = float(np.sum(ties.astype(float) ** 3 - ties)) / (total * (total - 1)) if total > 1 else 0.0
    variance = n1 * n2 / 12.0 * ((total + 1) - tie_term)

    if variance <= 1e-12:
        return TestReport(statistic=0.0, p_value=1.0, method=TestMethod.WILCOXON, n1=n1, n2=n2)

    deviation = rank_sum - expected
    corrected = np.sign(deviation) * max(abs(deviation) - 0.5, 0.0)
    z = float(corrected / np.sqrt(variance))
    p_value = _clip_p(2.0 * special.ndtr(-abs(z)))
    return TestReport(statistic=z, p_value=p_value, method=TestMethod.WILCOXON, n1=n1, n2=n2)


def run_test(x: Sequence[float], y: Sequence[float], method: TestMethod) -> TestReport:
    method = TestMethod(method)
    if method == TestMethod.WILCOXON:
        return wilcoxon_rank_sum(x, y)
    return t_test(x, y, method)


# ==================================================================================================
# SECTION 2: CLUSTERING AND CALIBRATION METRICS
# ==================================================================================================

def _pairs(counts: np.ndarray) -> int:
    counts = counts.astype(np.int64)
    return int(np.sum(counts * (counts - 1) // 2))


def adjusted_rand_index(a: Sequence[int], b: Sequence[int]) -> float:
    """Contingency-table ARI; identical partitions up to renaming score 1."""
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    if a.size != b.size:
        raise LengthMismatchError(f"label vectors differ in length: {a.size} vs {b.size}")
    if a.size < 2:
        raise InsufficientDataError("ARI needs at least 2 labelled items")

    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)

    index = _pairs(table.ravel())
    sum_rows = _pairs(table.sum(axis=1))
    sum_cols = _pairs(table.sum(axis=0))
    total_pairs = a.size * (a.size - 1) // 2
    expected = sum_rows * sum_cols / total_pairs
    maximum = (sum_rows + sum_cols) / 2.0
    if maximum == expected:
        return 1.0
    return float((index - expected) / (maximum - expected))


def _p_vector(p_values: Sequence[float]) -> np.ndarray:
    p = _vector(p_values)
    if p.size == 0:
        raise RangeError("at least one p-value is required")
    if np.any(~((p >= 0.0) & (p <= 1.0))):
        raise RangeError("p-values must lie in [0, 1]")
    return p


def rejection_rate(p_values: Sequence[float], alpha: float) -> float:
    """Fraction of p-values with p <= alpha."""
    if not 0.0 < alpha < 1.0:
        raise RangeError(f"alpha must lie in (0, 1), got {alpha}")
    p = _p_vector(p_values)
    return float(np.mean(p <= alpha))


def qq_uniform(p_values: Sequence[float]) -> List[Tuple[float, float]]:
    """Plot-ready (expected, observed) pairs against Uniform(0, 1) plotting positions."""
    observed = np.sort(_vector(p_values))
    m = observed.size
    expected = (np.arange(1, m + 1) - 0.5) / m
    return [(float(e), float(o)) for e, o in zip(expected, observed)]


def ks_uniform_pvalue(p_values: Sequence[float]) -> float:
    """Kolmogorov-Smirnov p-value of the hypothesis that p-values are Uniform(0, 1)."""
    return float(stats.kstest(_p_vector(p_values), "uniform").pvalue)
