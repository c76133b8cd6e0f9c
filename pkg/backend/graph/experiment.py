from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field

from core.errors import PipelineError
from core.models import BiasSpec, Family
from core.replicate_state import ReplicateState
from core.stattest import ks_uniform_pvalue, qq_uniform, rejection_rate
from core.theory import rho_fission, type1_t
from core.utilities import C_ACTION, C_GREEN, C_RED, C_RESET, C_YELLOW, DEFAULT_WORKERS
from graph.replicate_graph import ReplicateGraph
from graph.scenarios import GridPoint, ScenarioConfig, ScenarioKind

# ==================================================================================================
# SECTION 1: RESULT RECORDS
# ==================================================================================================

class ReplicateResult(BaseModel):
    """Everything recorded for one replicate; reproducible from (config, point, replicate)."""
    point: GridPoint
    replicate: int
    seed_used: int
    ari: Optional[float] = None
    p_values: Dict[str, List[float]] = Field(description="Test method -> p-value per tested variable (NaN = no pair or untestable).")
    tested_variables: List[int]
    pair_sizes: List[List[int]]
    unmatched: int = 0
    untestable: int = 0


class SummaryRow(BaseModel):
    """One tidy output row; column order is the CSV schema."""
    scenario: str
    kind: str
    tau: float
    n: int
    bias: float
    rho: float
    mode: str
    test: Optional[str] = None
    metric: str
    value: float
    se: Optional[float] = None
    replicates: int
    seed: int


class QQRow(BaseModel):
    scenario: str
    tau: float
    n: int
    bias: float
    rho: float
    mode: str
    test: str
    expected: float
    observed: float


@dataclass
class ExperimentSummary:
    config: ScenarioConfig
    rows: List[SummaryRow] = field(default_factory=list)
    qq: List[QQRow] = field(default_factory=list)
    failures: List[str] = field(default_factory=list)

    def metric(self, name: str, test: Optional[str] = None, **coords) -> List[SummaryRow]:
        """Rows for one metric, optionally filtered by test and grid coordinates."""
        found = []
        for row in self.rows:
            if row.metric != name or (test is not None and row.test != test):
                continue
            if all(getattr(row, key) == value for key, value in coords.items()):
                found.append(row)
        return found

    def value(self, name: str, test: Optional[str] = None, **coords) -> float:
        rows = self.metric(name, test, **coords)
        if len(rows) != 1:
            raise KeyError(f"expected one '{name}' row for {coords}, found {len(rows)}")
        return rows[0].value


# ==================================================================================================
# SECTION 2: REPLICATE EXECUTION
# ==================================================================================================

def initial_state(cfg: ScenarioConfig, point: GridPoint, replicate: int) -> ReplicateState:
    return {
        "config": cfg,
        "point": point,
        "replicate": replicate,
        "seed": point.replicate_seed(cfg.master_seed, replicate),
        "visited_nodes": [],
    }


def run_replicate(cfg: ScenarioConfig, point: GridPoint, r: int, graph: Optional[ReplicateGraph] = None) -> ReplicateResult:
    graph = graph or ReplicateGraph()
    state = initial_state(cfg, point, r)
    final = graph.invoke(state)

    if final.get("error") or not final.get("tested"):
        cause = final.get("exception") or RuntimeError(final.get("error", "replicate ended before testing"))
        raise PipelineError(final.get("failed_stage") or "supervisor_agent", {**point.as_dict(), "replicate": r}, cause)

    return ReplicateResult(
        point=point,
        replicate=r,
        seed_used=state["seed"],
        ari=final.get("ari"),
        p_values=final["p_values"],
        tested_variables=final["tested_variables"],
        pair_sizes=final["pair_sizes"],
        unmatched=final.get("unmatched", 0),
        untestable=final.get("untestable", 0),
    )


# ==================================================================================================
# SECTION 3: EXPERIMENT EXECUTION AND AGGREGATION
# ==================================================================================================

Outcome = Union[ReplicateResult, PipelineError]


def run_experiment(cfg: ScenarioConfig, workers: int = DEFAULT_WORKERS, verbose: bool = True) -> ExperimentSummary:
    """
    Maps run_replicate over grid x replicates on a thread pool. Results are collected in
    task order, so the summary does not depend on the worker count.
    """
    graph = ReplicateGraph()
    points = cfg.points()
    tasks: List[Tuple[GridPoint, int]] = [(point, r) for point in points for r in range(cfg.replicates)]
    if verbose:
        print(f"{C_ACTION}[EXPERIMENT START] {cfg.name}: {len(points)} grid point(s) x {cfg.replicates} replicate(s), {workers} worker(s){C_RESET}")

    def attempt(task: Tuple[GridPoint, int]) -> Outcome:
        point, r = task
        try:
            return run_replicate(cfg, point, r, graph)
        except PipelineError as exc:
            return exc

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        outcomes = list(pool.map(attempt, tasks))

    summary = ExperimentSummary(config=cfg)
    for i, point in enumerate(points):
        block = outcomes[i * cfg.replicates:(i + 1) * cfg.replicates]
        results = [o for o in block if isinstance(o, ReplicateResult)]
        errors = [o for o in block if isinstance(o, PipelineError)]
        summary.failures.extend(str(e) for e in errors)
        rows, qq = summarize_point(cfg, point, results, len(errors))
        summary.rows.extend(rows)
        summary.qq.extend(qq)
        if verbose:
            colour = C_RED if errors else C_YELLOW
            headline = next((r for r in rows if r.metric in ("rejection_rate", "type1_h0")), None)
            shown = f"{headline.metric}={headline.value:.4f}" if headline else "no p-values"
            print(f"{colour}[EXPERIMENT POINT] {point.as_dict()} {shown} failures={len(errors)}{C_RESET}")

    if verbose:
        print(f"{C_GREEN}[EXPERIMENT DONE] {cfg.name}: {len(summary.rows)} summary row(s), {len(summary.failures)} failure(s){C_RESET}")
    return summary


def null_variable_mask(cfg: ScenarioConfig) -> np.ndarray:
    """Variables whose generating parameters are identical in every component."""
    comps = cfg.mixture.components
    if cfg.mixture.family == Family.GAUSSIAN:
        first = comps[0].mean_array()
        return np.all([np.isclose(c.mean_array(), first) for c in comps], axis=0)
    mu0, th0 = comps[0].mu_array(), comps[0].theta_array()
    same = [np.isclose(c.mu_array(), mu0) & np.isclose(c.theta_array(), th0) for c in comps]
    return np.all(same, axis=0)


def _rate_row(base: Dict, test: str, metric: str, p: np.ndarray, alpha: float) -> Optional[SummaryRow]:
    if p.size == 0:
        return None
    rate = rejection_rate(p, alpha)
    return SummaryRow(**base, test=test, metric=metric, value=rate, se=float(np.sqrt(rate * (1.0 - rate) / p.size)))


def summarize_point(cfg: ScenarioConfig, point: GridPoint, results: List[ReplicateResult],
                    failures: int) -> Tuple[List[SummaryRow], List[QQRow]]:
    base = {
        "scenario": cfg.name, "kind": cfg.kind.value, "tau": point.tau, "n": point.n,
        "bias": point.bias, "rho": point.rho, "mode": point.mode.value,
        "replicates": len(results), "seed": cfg.master_seed,
    }
    rows: List[SummaryRow] = []
    qq: List[QQRow] = []

    aris = np.array([r.ari for r in results if r.ari is not None], dtype=float)
    if aris.size:
        se = float(aris.std(ddof=1) / np.sqrt(aris.size)) if aris.size > 1 else None
        rows.append(SummaryRow(**base, metric="ari_mean", value=float(aris.mean()), se=se))

    imbalance = [
        abs(a - b) / (a + b)
        for r in results for a, b in r.pair_sizes if a + b > 0
    ]
    if imbalance:
        rows.append(SummaryRow(**base, metric="pair_imbalance", value=float(np.mean(imbalance))))

    rows.append(SummaryRow(**base, metric="failures", value=float(failures)))
    rows.append(SummaryRow(**base, metric="unmatched", value=float(sum(r.unmatched for r in results))))
    rows.append(SummaryRow(**base, metric="untestable", value=float(sum(r.untestable for r in results))))

    if cfg.kind == ScenarioKind.BIAS_SWEEP:
        sigma2 = float(cfg.mixture.components[0].cov_array()[0, 0])
        rho = rho_fission(BiasSpec.from_relative_bias(sigma2, point.bias, point.tau))
        rows.append(SummaryRow(**base, test=cfg.test.value, metric="theory_type1", value=type1_t(rho, point.n, cfg.alpha)))

    null_mask = null_variable_mask(cfg) if cfg.kind == ScenarioKind.TWO_POPULATION_SYNTHETIC else None
    for test in cfg.tests:
        name = test.value
        p_all, p_null, p_signal = [], [], []
        for r in results:
            for var, p in zip(r.tested_variables, r.p_values.get(name, [])):
                if np.isnan(p):
                    continue
                p_all.append(p)
                if null_mask is not None:
                    (p_null if null_mask[var] else p_signal).append(p)
        p_all = np.asarray(p_all, dtype=float)

        if null_mask is None:
            rate = _rate_row(base, name, "rejection_rate", p_all, cfg.alpha)
            ks_source = p_all
            if rate:
                rows.append(rate)
        else:
            for metric, values in (("type1_h0", p_null), ("power_h1", p_signal)):
                rate = _rate_row(base, name, metric, np.asarray(values, dtype=float), cfg.alpha)
                if rate:
                    rows.append(rate)
            ks_source = np.asarray(p_null, dtype=float)

        if ks_source.size:
            rows.append(SummaryRow(**base, test=name, metric="ks_uniform_p", value=ks_uniform_pvalue(ks_source)))
            qq.extend(
                QQRow(scenario=cfg.name, tau=point.tau, n=point.n, bias=point.bias, rho=point.rho,
                      mode=point.mode.value, test=name, expected=e, observed=o)
                for e, o in qq_uniform(ks_source)
            )
    return rows, qq
