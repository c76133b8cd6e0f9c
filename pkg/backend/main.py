import argparse
import json
import os
import sys
import time
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from core.count_io import (
    CountFormat,
    MinVariance,
    ResultFormat,
    RunManifest,
    TopVariable,
    filter_cells,
    filter_genes,
    read_counts,
    read_labels,
    write_manifest,
    write_results,
)
from core.decompose import ScalePlugin, decompose
from core.errors import FissionLabError, ParameterError, ParseError
from core.estimate import empirical_cov, nb_theta_columns
from core.models import DecompositionMethod, MixtureSpec, TestMethod, Type1Variant
from core.theory import covariance_summary, cov_nb_thin, type1_curve
from core.utilities import (
    C_ACTION, C_CYAN, C_GREEN, C_RED, C_RESET, C_YELLOW,
    DEFAULT_OUT_DIR, DEFAULT_SEED, DEFAULT_WORKERS,
)
from graph.count_analysis import AnalysisOptions, GeneRow, analyze_counts
from graph.experiment import QQRow, SummaryRow, run_experiment
from graph.scenarios import ClusteringScope, builtin_scenarios, load_scenario

SUMMARY_COLUMNS = list(SummaryRow.model_fields)
QQ_COLUMNS = list(QQRow.model_fields)
GENE_COLUMNS = list(GeneRow.model_fields)
TYPE1_COLUMNS = ["relative_bias", "n", "alpha", "variant", "type1"]
COVARIANCE_COLUMNS = ["mode", "scope", "component", "cov"]
NB_COV_COLUMNS = ["mu", "theta", "theta_hat", "tau", "cov"]

# type1 sweeps relative biases, cov sweeps plug-in theta_hat values
THEORY_GRIDS = {"type1": "-0.5,-0.2,0,0.2,0.5", "cov": "1,2,5,10,20"}
THEORY_TAUS = {"type1": 1.0, "cov": 0.5}

# ==================================================================================================
# SECTION 1: HELPERS
# ==================================================================================================

def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ParameterError(f"expected a comma-separated list of numbers, got '{text}'") from exc


def _out_path(out_dir: str, name: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    return os.path.join(out_dir, name)


def _echo(args: argparse.Namespace) -> Dict[str, object]:
    return {key: value for key, value in vars(args).items() if key != "handler"}


def _finish_manifest(manifest: RunManifest, out_dir: str, stem: str) -> None:
    manifest.wall_clock_seconds = round(time.time() - manifest.started_at, 3)
    write_manifest(manifest, _out_path(out_dir, f"{stem}_manifest.json"))


def _read_real_matrix(path: str) -> pd.DataFrame:
    """Rows are observations, first column an id, header row variable names."""
    if not os.path.isfile(path):
        raise ParseError(f"input file not found: {path}")
    frame = pd.read_csv(path, index_col=0)
    try:
        return frame.astype(float)
    except ValueError as exc:
        raise ParseError(f"non-numeric entry in {path}: {exc}") from exc


def _write_matrix(frame: pd.DataFrame, values: np.ndarray, path: str) -> None:
    cells = values.astype(object)
    if np.issubdtype(values.dtype, np.floating):
        cells = np.vectorize(lambda v: repr(float(v)), otypes=[object])(values)
    pd.DataFrame(cells, index=frame.index, columns=frame.columns).to_csv(path, lineterminator="\n")


# ==================================================================================================
# SECTION 2: SUBCOMMANDS
# ==================================================================================================

def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = load_scenario(args.scenario)
    extra = [TestMethod.T_POOLED, TestMethod.T_WELCH] if args.both_t_variants else None
    cfg = cfg.with_overrides(replicates=args.replicates, seed=args.seed, extra_tests=extra)
    manifest = RunManifest(command="simulate", config=cfg.model_dump(mode="json"), master_seed=cfg.master_seed)

    summary = run_experiment(cfg, workers=args.workers)
    ext = "csv" if args.format == ResultFormat.CSV.value else "jsonl"
    summary_path = _out_path(args.out, f"{cfg.name}_summary.{ext}")
    write_results(summary.rows, summary_path, args.format, columns=SUMMARY_COLUMNS)
    write_results(summary.qq, _out_path(args.out, f"{cfg.name}_qq.{ext}"), args.format, columns=QQ_COLUMNS)

    manifest.row_counts = {"summary": len(summary.rows), "qq": len(summary.qq), "failures": len(summary.failures)}
    _finish_manifest(manifest, args.out, cfg.name)
    print(f"{C_GREEN}[CLI DONE] {len(summary.rows)} row(s) written to {summary_path}{C_RESET}")
    return 0


def cmd_theory(args: argparse.Namespace) -> int:
    rows: List[Dict[str, object]] = []
    grid = _float_list(args.grid or THEORY_GRIDS[args.what])
    tau = args.tau if args.tau is not None else THEORY_TAUS[args.what]
    if args.what == "type1":
        columns = TYPE1_COLUMNS
        curve = type1_curve(grid, args.n, args.alpha, Type1Variant(args.variant), args.sigma2, tau)
        for bias, value in curve.grid:
            rows.append({"relative_bias": bias, "n": curve.n, "alpha": curve.alpha,
                         "variant": curve.variant.value, "type1": value})
        config = curve.model_dump(mode="json", exclude={"grid"})
    elif args.spec:
        with open(args.spec, "r", encoding="utf-8") as handle:
            spec = MixtureSpec.model_validate_json(handle.read())
        columns = COVARIANCE_COLUMNS
        for row in covariance_summary(spec):
            rows.append({"mode": row.mode, "scope": row.scope, "component": row.component, "cov": json.dumps(row.cov)})
        config = {"spec": spec.model_dump(mode="json")}
    else:
        columns = NB_COV_COLUMNS
        for theta_hat in grid:
            rows.append({"mu": args.mu, "theta": args.theta, "theta_hat": theta_hat, "tau": tau,
                         "cov": cov_nb_thin(args.mu, args.theta, theta_hat, tau)})
        config = {"mu": args.mu, "theta": args.theta, "tau": tau, "theta_hat_grid": grid}

    for row in rows:
        print(f"{C_CYAN}[THEORY {args.what.upper()}] {row}{C_RESET}")
    manifest = RunManifest(command=f"theory {args.what}", config=config, master_seed=DEFAULT_SEED)
    write_results(rows, _out_path(args.out, f"theory_{args.what}.csv"), columns=columns)
    manifest.row_counts = {"rows": len(rows)}
    _finish_manifest(manifest, args.out, f"theory_{args.what}")
    return 0


def _scale_plugin(method: DecompositionMethod, data: np.ndarray, scale: str) -> Optional[ScalePlugin]:
    if method == DecompositionMethod.POISSON_THIN:
        return None
    gaussian = method in (DecompositionMethod.GAUSS_FISSION, DecompositionMethod.GAUSS_THIN)
    if scale == "auto":
        return ScalePlugin.marginal_cov(empirical_cov(data)) if gaussian else ScalePlugin.marginal_theta(nb_theta_columns(data))
    with open(scale, "r", encoding="utf-8") as handle:
        payload = json.load(handle)
    key = "cov" if gaussian else "theta"
    if key not in payload:
        raise ParameterError(f"scale file {scale} needs a '{key}' entry")
    return ScalePlugin.marginal_cov(payload[key]) if gaussian else ScalePlugin.marginal_theta(payload[key])


def cmd_decompose(args: argparse.Namespace) -> int:
    method = DecompositionMethod(args.method)
    if method in (DecompositionMethod.POISSON_THIN, DecompositionMethod.NB_THIN):
        counts = read_counts(args.input, args.input_format, transpose=args.transpose)
        frame = pd.DataFrame(counts.values, index=counts.cell_ids, columns=counts.gene_ids)
        data = counts.values
    else:
        frame = _read_real_matrix(args.input)
        data = frame.to_numpy()

    manifest = RunManifest(command="decompose", config=_echo(args), master_seed=args.seed)
    pair = decompose(data, method, args.tau, args.seed, _scale_plugin(method, data, args.scale))
    _write_matrix(frame, pair.x1, _out_path(args.out, "x1.csv"))
    _write_matrix(frame, pair.x2, _out_path(args.out, "x2.csv"))
    manifest.row_counts = {"x1": int(pair.x1.shape[0]), "x2": int(pair.x2.shape[0])}
    _finish_manifest(manifest, args.out, "decompose")
    print(f"{C_GREEN}[CLI DONE] {method.value} split written to {args.out}{C_RESET}")
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    counts = read_counts(args.counts, args.input_format, transpose=args.transpose)
    if args.max_zero_frac is not None:
        counts = filter_cells(counts, args.max_zero_frac)
    if args.min_variance is not None:
        counts = filter_genes(counts, MinVariance(args.min_variance))
    if args.top_genes is not None:
        counts = filter_genes(counts, TopVariable(args.top_genes))
    labels = read_labels(args.labels, counts.cell_ids).tolist() if args.labels else None

    options = AnalysisOptions(
        tau=args.tau,
        k_cluster=args.k,
        clustering_scope=ClusteringScope.MULTIVARIATE if args.scope == "multi" else ClusteringScope.UNIVARIATE,
        labels=labels,
        alpha=args.alpha,
        seed=args.seed,
    )
    manifest = RunManifest(command="analyze", config=_echo(args), master_seed=args.seed)
    report = analyze_counts(counts, options)
    path = _out_path(args.out, f"analysis.{'csv' if args.format == 'csv' else 'jsonl'}")
    write_results(report.rows, path, args.format, columns=GENE_COLUMNS)
    manifest.row_counts = {"genes": len(report.rows), "cells": counts.n_cells}
    _finish_manifest(manifest, args.out, "analysis")
    print(f"{C_GREEN}[CLI DONE] rejection rate {report.rejection_rate:.4f}; rows written to {path}{C_RESET}")
    return 0


def cmd_scenarios(args: argparse.Namespace) -> int:
    manifest = RunManifest(command="scenarios list", config=_echo(args), master_seed=DEFAULT_SEED)
    scenarios = builtin_scenarios()
    for name, cfg in scenarios.items():
        print(f"{C_CYAN}{name:<26}{C_RESET} {cfg.kind.value:<26} points={len(cfg.points()):<4} R={cfg.replicates}")
    manifest.row_counts = {"scenarios": len(scenarios)}
    _finish_manifest(manifest, args.out, "scenarios")
    return 0


# ==================================================================================================
# SECTION 3: PARSER AND ENTRY POINT
# ==================================================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fissionlab", description="Data fission / thinning experiments after clustering.")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="Run a builtin or JSON-configured scenario.")
    sim.add_argument("--scenario", required=True, help="Builtin name or path to a ScenarioConfig JSON file.")
    sim.add_argument("--replicates", type=int, default=None)
    sim.add_argument("--seed", type=int, default=None, help="Master seed (default: the scenario's, i.e. FISSIONLAB_SEED).")
    sim.add_argument("--workers", type=int, default=DEFAULT_WORKERS)
    sim.add_argument("--out", default=DEFAULT_OUT_DIR)
    sim.add_argument("--format", choices=[f.value for f in ResultFormat], default=ResultFormat.CSV.value)
    sim.add_argument("--both-t-variants", action="store_true", help="Record pooled and Welch t-tests.")
    sim.set_defaults(handler=cmd_simulate)

    theory = sub.add_parser("theory", help="Closed-form Type I error and covariance values.")
    theory.add_argument("what", choices=["type1", "cov"])
    theory.add_argument("--grid", default=None,
                        help="Relative biases (type1, default -0.5..0.5) or plug-in theta values (cov, default 1,2,5,10,20).")
    theory.add_argument("--sigma2", type=float, default=1.0)
    theory.add_argument("--tau", type=float, default=None, help="Default 1 for type1, 0.5 for cov.")
    theory.add_argument("--n", type=int, default=500)
    theory.add_argument("--alpha", type=float, default=0.05)
    theory.add_argument("--variant", choices=[v.value for v in Type1Variant], default=Type1Variant.STUDENT_T.value)
    theory.add_argument("--mu", type=float, default=5.0)
    theory.add_argument("--theta", type=float, default=5.0)
    theory.add_argument("--spec", default=None, help="Gaussian MixtureSpec JSON; prints the covariance summary.")
    theory.add_argument("--out", default=DEFAULT_OUT_DIR)
    theory.set_defaults(handler=cmd_theory)

    dec = sub.add_parser("decompose", help="Split a data matrix into two parts.")
    dec.add_argument("--input", required=True)
    dec.add_argument("--input-format", choices=[f.value for f in CountFormat], default=None)
    dec.add_argument("--transpose", action="store_true")
    dec.add_argument("--method", choices=[m.value for m in DecompositionMethod], required=True)
    dec.add_argument("--tau", type=float, required=True)
    dec.add_argument("--scale", default="auto", help="'auto' or a JSON file with 'cov' or 'theta'.")
    dec.add_argument("--seed", type=int, default=DEFAULT_SEED)
    dec.add_argument("--out", default=DEFAULT_OUT_DIR)
    dec.set_defaults(handler=cmd_decompose)

    ana = sub.add_parser("analyze", help="Thin, cluster and test a count matrix gene by gene.")
    ana.add_argument("--counts", required=True)
    ana.add_argument("--input-format", choices=[f.value for f in CountFormat], default=None)
    ana.add_argument("--transpose", action="store_true", help="Input has genes as rows.")
    ana.add_argument("--tau", type=float, default=0.5)
    ana.add_argument("--k", type=int, default=2)
    ana.add_argument("--scope", choices=["multi", "uni"], default="uni")
    ana.add_argument("--labels", default=None, help="CSV of cell_id,label for conditional theta.")
    ana.add_argument("--alpha", type=float, default=0.05)
    ana.add_argument("--min-variance", type=float, default=None)
    ana.add_argument("--top-genes", type=int, default=None)
    ana.add_argument("--max-zero-frac", type=float, default=None)
    ana.add_argument("--seed", type=int, default=DEFAULT_SEED)
    ana.add_argument("--out", default=DEFAULT_OUT_DIR)
    ana.add_argument("--format", choices=[f.value for f in ResultFormat], default=ResultFormat.CSV.value)
    ana.set_defaults(handler=cmd_analyze)

    scen = sub.add_parser("scenarios", help="List builtin scenarios.")
    scen.add_argument("action", choices=["list"])
    scen.add_argument("--out", default=DEFAULT_OUT_DIR)
    scen.set_defaults(handler=cmd_scenarios)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    print(f"{C_ACTION}[CLI START] fissionlab {args.command}{C_RESET}")
    try:
        return args.handler(args)
    except FissionLabError as exc:
        print(f"{C_RED}[CLI ERROR] {type(exc).__name__}: {exc}{C_RESET}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"{C_RED}[CLI ERROR] I/O failure: {exc}{C_RESET}", file=sys.stderr)
        return 3
    except ValueError as exc:
        # pydantic validation of user-supplied configuration
        print(f"{C_YELLOW}[CLI ERROR] invalid configuration: {exc}{C_RESET}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
