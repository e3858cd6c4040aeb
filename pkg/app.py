"""ZNE service: uploaded calibration models held in expiring sessions."""
import asyncio
import datetime
import json
import logging
import os
import threading
import uuid
from contextlib import asynccontextmanager
from typing import Dict, List, Optional, Tuple

import uvicorn
from dotenv import load_dotenv
from fastapi import FastAPI, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import RedirectResponse
from pydantic import BaseModel

from calibration_session import CalibrationSession
from circuit_ir import parse_circuit, serialize
from folding import DEFAULT_GAMMA, FOLD_METHODS, apply_noise_aware_plan, fold, plan_noise_aware
from mapper import Layout, noise_adaptive_layout, route
from noise_model import NoiseModel, load_noise_model
from runner import RunConfig, RunResult, run
from utils.exceptions import CalibrationError, CircuitError, StageError, ZNEError

logger = logging.getLogger(__name__)

# Load environment variables
load_dotenv()

# --- Configuration ---
SESSION_CLEANUP_INTERVAL_SECONDS = int(os.getenv("ZNE_MODEL_CLEANUP_INTERVAL_SECONDS", 300))
SESSION_TIMEOUT_MINUTES = float(os.getenv("ZNE_MODEL_TIMEOUT_MINUTES", 15))
RUN_TIMEOUT_SECONDS = float(os.getenv("ZNE_RUN_TIMEOUT_SECONDS", 600))
MAX_RUNS_PER_MODEL = int(os.getenv("ZNE_MAX_RUNS_PER_MODEL", 50))

# --- In-Memory Session Storage ---
sessions: Dict[str, CalibrationSession] = {}
_session_lock = threading.Lock()


# --- Background Cleanup Logic ---
def _clean_sessions_once():
    now = datetime.datetime.now()
    expiration_time = datetime.timedelta(minutes=SESSION_TIMEOUT_MINUTES)

    with _session_lock:
        expired_ids = [
            model_id for model_id, session in sessions.items()
            if now - session.last_accessed > expiration_time
        ]
        for model_id in expired_ids:
            del sessions[model_id]
            logger.info("Cleaned up expired model session: %s", model_id)


async def cleanup_expired_sessions_task():
    while True:
        _clean_sessions_once()
        await asyncio.sleep(SESSION_CLEANUP_INTERVAL_SECONDS)


# --- FastAPI Lifespan Management ---
@asynccontextmanager
async def lifespan(app: FastAPI):
    logger.info("Starting session cleanup task...")
    cleanup = asyncio.create_task(cleanup_expired_sessions_task())
    yield
    cleanup.cancel()
    logger.info("Application shutdown.")


# --- App Initialization ---
app = FastAPI(
    title="ZNE",
    description="Zero-noise extrapolation with noise-aware folding against uploaded calibration data.",
    version="1.0.0",
    lifespan=lifespan,
)

app.add_middleware(
    CORSMiddleware, allow_origins=["*"], allow_credentials=True,
    allow_methods=["*"], allow_headers=["*"],
)


# --- Helper Functions ---
def _get_session(model_id: str) -> CalibrationSession:
    with _session_lock:
        session = sessions.get(model_id)
    if not session:
        raise HTTPException(status_code=404, detail="Model session not found.")
    session.touch()
    return session


# --- API Models ---
class ModelResponse(BaseModel):
    model_id: str
    backend: str
    num_qubits: int
    num_edges: int


class ModelStatusResponse(BaseModel):
    model_id: str
    active: bool
    remaining_minutes: Optional[float] = None
    last_accessed: str


class FoldPayload(BaseModel):
    circuit: str
    method: str = "noise-aware"
    scale: float = 2.0
    gamma: float = DEFAULT_GAMMA
    seed: int = 0
    map_circuit: bool = True
    append_folds: bool = False


class FoldResponse(BaseModel):
    circuit: str
    gate_count: int
    inserted: int
    swap_count: int
    layout: List[Tuple[int, int]]
    pair_folds: Dict[str, int] = {}


class RunResponse(BaseModel):
    run_id: str
    result: RunResult


# --- API Endpoints ---
@app.get("/", include_in_schema=False)
async def root():
    return RedirectResponse(url="/docs")


@app.post("/models", response_model=ModelResponse, summary="Upload a calibration model")
async def create_model(request: Request):
    body_bytes = await request.body()
    model = None

    # 1. Try a JSON calibration document first
    try:
        document = json.loads(body_bytes)
    except Exception:
        document = None

    try:
        if isinstance(document, dict):
            model = NoiseModel.from_dict(document)
        else:
            # 2. Fall back to a multipart file upload
            try:
                form = await request.form()
                file = form.get("file")
            except Exception:
                file = None
            if not file or not getattr(file, "filename", None):
                content_type = request.headers.get("content-type", "")
                raise HTTPException(
                    status_code=400,
                    detail=(
                        "Provide either a calibration file (multipart/form-data) or a JSON "
                        f"calibration document. Received Content-Type: {content_type}."
                    ),
                )
            model = load_noise_model(await file.read(), name=file.filename)
    except CalibrationError as e:
        raise HTTPException(status_code=400, detail=str(e))

    if model.num_qubits < 1:
        raise HTTPException(status_code=400, detail="The calibration document describes no qubits.")

    model_id = uuid.uuid4().hex
    with _session_lock:
        sessions[model_id] = CalibrationSession(model, max_runs=MAX_RUNS_PER_MODEL)
    logger.info("Stored model '%s' as %s", model.backend, model_id)
    return ModelResponse(
        model_id=model_id, backend=model.backend,
        num_qubits=model.num_qubits, num_edges=len(model.edges()),
    )


@app.get("/models/{model_id}/status", response_model=ModelStatusResponse, summary="Get model session status")
async def get_model_status(model_id: str):
    """Returns session status, activity state, and remaining time before expiration."""
    now = datetime.datetime.now()
    expiration_time = datetime.timedelta(minutes=SESSION_TIMEOUT_MINUTES)

    with _session_lock:
        session = sessions.get(model_id)

    if not session:
        return ModelStatusResponse(model_id=model_id, active=False, last_accessed=now.isoformat())

    remaining_time = expiration_time - (now - session.last_accessed)
    if remaining_time.total_seconds() <= 0:
        return ModelStatusResponse(
            model_id=model_id, active=False, last_accessed=session.last_accessed.isoformat()
        )

    return ModelStatusResponse(
        model_id=model_id,
        active=True,
        remaining_minutes=remaining_time.total_seconds() / 60,
        last_accessed=session.last_accessed.isoformat(),
    )


@app.post("/models/{model_id}/fold", response_model=FoldResponse, summary="Fold one circuit at one scale factor")
async def fold_circuit(model_id: str, payload: FoldPayload):
    session = _get_session(model_id)
    model = session.model
    if payload.method not in FOLD_METHODS:
        raise HTTPException(status_code=400, detail=f"method must be one of {', '.join(FOLD_METHODS)}")

    try:
        circuit = parse_circuit(payload.circuit)
    except CircuitError as e:
        raise HTTPException(status_code=400, detail=str(e))

    try:
        if payload.map_circuit:
            routed = route(circuit, noise_adaptive_layout(circuit, model), model)
            physical, layout, swaps = routed.circuit, routed.initial_layout, routed.swap_count
        else:
            physical, layout, swaps = circuit, Layout.identity(circuit.num_qubits), 0

        pair_folds = {}
        if payload.method == "noise-aware":
            plan = plan_noise_aware(physical, payload.scale, payload.gamma, model)
            folded = apply_noise_aware_plan(physical, plan, payload.append_folds)
            pair_folds = {f"{i}_{j}": folds for (i, j), folds in plan.folds().items()}
        else:
            folded = fold(physical, payload.method, payload.scale, seed=payload.seed)
    except CircuitError as e:
        raise HTTPException(status_code=400, detail=str(e))
    except ZNEError as e:
        raise HTTPException(status_code=422, detail=str(e))

    return FoldResponse(
        circuit=serialize(folded),
        gate_count=folded.depth,
        inserted=folded.inserted_count(),
        swap_count=swaps,
        layout=layout.to_pairs(),
        pair_folds=pair_folds,
    )


@app.post("/models/{model_id}/runs", response_model=RunResponse, summary="Run a ZNE experiment")
async def create_run(model_id: str, config: RunConfig):
    session = _get_session(model_id)
    config = config.model_copy(update={"noise_model": None, "dump_matrix": None})

    cancel = threading.Event()
    try:
        result = await asyncio.wait_for(
            asyncio.to_thread(run, config, session.model, cancel),
            timeout=RUN_TIMEOUT_SECONDS,
        )
    except asyncio.TimeoutError:
        # The worker thread cannot be killed; it stops at its next point.
        cancel.set()
        raise HTTPException(status_code=504, detail="Run timed out.")
    except StageError as e:
        if isinstance(e.cause, (CircuitError, CalibrationError)):
            raise HTTPException(status_code=400, detail=str(e))
        raise HTTPException(status_code=422, detail=str(e))

    run_id = uuid.uuid4().hex
    session.add_run(run_id, result)
    logger.info("Run %s finished on model %s", run_id, model_id)
    return RunResponse(run_id=run_id, result=result)


@app.get("/models/{model_id}/runs/{run_id}", response_model=RunResult, summary="Fetch a stored run")
async def get_run(model_id: str, run_id: str):
    session = _get_session(model_id)
    result = session.get_run(run_id)
    if result is None:
        raise HTTPException(status_code=404, detail="Run not found for this model.")
    return result


@app.delete("/models/{model_id}", status_code=204, summary="Delete a model session")
async def delete_model(model_id: str):
    with _session_lock:
        session = sessions.pop(model_id, None)
    if not session:
        raise HTTPException(status_code=404, detail="Model session not found.")
    return


if __name__ == "__main__":
    uvicorn.run(app, host="0.0.0.0", port=7860)
