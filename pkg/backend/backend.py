import asyncio
import math
import traceback
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv
from fastapi import FastAPI, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from core.errors import FissionLabError
from core.models import MixtureSpec, TestMethod, Type1Variant
from core.theory import CovarianceRow, cov_nb_thin, covariance_summary, type1_curve
from core.utilities import (
    ARTIFACT_VERSION, C_ACTION, C_CYAN, C_GREEN, C_MAGENTA, C_RED, C_RESET, DEFAULT_WORKERS,
)
from graph.experiment import run_experiment
from graph.replicate_graph import ReplicateGraph
from graph.scenarios import builtin_scenarios, load_scenario

MAX_API_REPLICATES = 2000

executor = ThreadPoolExecutor(max_workers=DEFAULT_WORKERS)

app = FastAPI(title="FissionLab Experiment API")

# ------------------------------------------------------------------------------
# SECTION 1: CONFIGURATION
# ------------------------------------------------------------------------------
print(f" {C_ACTION}>> [INIT] Loading configuration.{C_RESET}")
load_dotenv()
replicate_graph: Optional[ReplicateGraph] = None

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_methods=["*"],
    allow_headers=["*"],
)

# ------------------------------------------------------------------------------
# SECTION 2: REQUEST MODELS
# ------------------------------------------------------------------------------

class Type1Request(BaseModel):
    relative_biases: List[float] = Field(min_length=1, description="(b2 - sigma2) / sigma2 values.")
    n: int = Field(ge=2)
    alpha: float = Field(default=0.05, gt=0.0, lt=1.0)
    variant: Type1Variant = Type1Variant.STUDENT_T
    sigma2: float = Field(default=1.0, gt=0.0)
    tau: float = Field(default=1.0, gt=0.0)


class NBCovRequest(BaseModel):
    mu: float = Field(gt=0.0)
    theta: float = Field(gt=0.0)
    theta_hat: float = Field(gt=0.0)
    tau: float = Field(gt=0.0, lt=1.0)


class SimulateRequest(BaseModel):
    scenario: str = Field(description="Builtin scenario name.")
    replicates: Optional[int] = Field(default=None, ge=1, le=MAX_API_REPLICATES)
    seed: Optional[int] = Field(default=None, ge=0)
    both_t_variants: bool = False


# ------------------------------------------------------------------------------
# SECTION 3: STARTUP AND HELPERS
# ------------------------------------------------------------------------------

@app.on_event("startup")
async def startup_event():
    global replicate_graph
    print(f" {C_CYAN}>> [API STARTUP] Compiling replicate graph...{C_RESET}")
    try:
        replicate_graph = ReplicateGraph()
        print(f" {C_GREEN}>> [API STARTUP] Replicate graph ready.{C_RESET}")
    except Exception:
        print(f" {C_RED}>> [FATAL STARTUP ERROR] {traceback.format_exc()}{C_RESET}")


@app.exception_handler(FissionLabError)
async def fissionlab_error_handler(request: Request, exc: FissionLabError):
    print(f" {C_RED}>> [API ERROR] {request.url.path}: {type(exc).__name__}: {exc}{C_RESET}")
    return JSONResponse(
        status_code=422,
        content={"error": type(exc).__name__, "detail": str(exc), "exit_code": exc.exit_code},
    )


def _cleanse_recursive_state(data: Any) -> Any:
    """Non-finite floats become None so responses stay valid JSON."""
    if isinstance(data, float):
        return data if math.isfinite(data) else None
    if isinstance(data, list):
        return [_cleanse_recursive_state(item) for item in data]
    if isinstance(data, dict):
        return {k: _cleanse_recursive_state(v) for k, v in data.items()}
    return data


# ------------------------------------------------------------------------------
# SECTION 4: API ENDPOINTS
# ------------------------------------------------------------------------------

@app.get("/")
async def home():
    print(f" {C_ACTION}>> [HOME] Health check called.{C_RESET}")
    return {
        "status": "running",
        "graph_status": "initialized" if replicate_graph else "failed_initialization",
        "artifact_version": ARTIFACT_VERSION,
    }


@app.get("/scenarios")
async def list_scenarios():
    return [
        {
            "name": name,
            "kind": cfg.kind.value,
            "grid_points": len(cfg.points()),
            "replicates": cfg.replicates,
            "tests": [t.value for t in cfg.tests],
        }
        for name, cfg in builtin_scenarios().items()
    ]


@app.get("/graph-visualization")
async def get_graph_visualization():
    if not replicate_graph:
        raise HTTPException(status_code=503, detail="Replicate graph not initialized.")
    return {"mermaid_syntax": replicate_graph.graph.get_graph().draw_mermaid()}


@app.post("/theory/type1")
async def theory_type1(req: Type1Request):
    curve = type1_curve(req.relative_biases, req.n, req.alpha, req.variant, req.sigma2, req.tau)
    return _cleanse_recursive_state(curve.model_dump(mode="json"))


@app.post("/theory/covariance", response_model=List[CovarianceRow])
async def theory_covariance(spec: MixtureSpec):
    return covariance_summary(spec)


@app.post("/theory/nb-covariance")
async def theory_nb_covariance(req: NBCovRequest):
    return {**req.model_dump(), "cov": cov_nb_thin(req.mu, req.theta, req.theta_hat, req.tau)}


@app.post("/simulate")
async def simulate(req: SimulateRequest):
    if req.scenario not in builtin_scenarios():
        raise HTTPException(status_code=404, detail=f"Unknown scenario '{req.scenario}'.")
    extra = [TestMethod.T_POOLED, TestMethod.T_WELCH] if req.both_t_variants else None
    cfg = load_scenario(req.scenario).with_overrides(replicates=req.replicates, seed=req.seed, extra_tests=extra)
    if cfg.replicates > MAX_API_REPLICATES:
        raise HTTPException(status_code=400, detail=f"At most {MAX_API_REPLICATES} replicates per request.")

    print(f"{C_MAGENTA} >> [SIMULATE] {cfg.name}: {len(cfg.points())} point(s) x {cfg.replicates}{C_RESET}")
    summary = await asyncio.get_running_loop().run_in_executor(
        executor,
        lambda: run_experiment(cfg, workers=1, verbose=False),
    )
    print(f"{C_GREEN} >> [SIMULATE DONE] {len(summary.rows)} row(s), {len(summary.failures)} failure(s){C_RESET}")
    return _cleanse_recursive_state({
        "scenario": cfg.name,
        "master_seed": cfg.master_seed,
        "replicates": cfg.replicates,
        "rows": [row.model_dump(mode="json") for row in summary.rows],
        "failures": summary.failures,
    })
