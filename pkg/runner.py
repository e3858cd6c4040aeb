"""End-to-end ZNE runs: map, fold at each λ, simulate, extrapolate, report."""
import csv
import hashlib
import logging
import os
import pathlib
import threading
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from typing import Dict, List, Optional, Tuple

import numpy as np
from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from accumulation import accumulate
from circuit_ir import Circuit, Gate, GateKind, compact
from extrapolation import ExtrapolationInput, extrapolate
from folding import DEFAULT_GAMMA, FOLD_METHODS, apply_noise_aware_plan, fold, plan_noise_aware
from mapper import Layout, RoutedCircuit, noise_adaptive_layout, readout_map, route
from noise_model import NoiseModel, load_noise_model
from simulator import (
    DENSITY_MAX_QUBITS,
    Observable,
    expectation,
    sample_counts,
    simulate_density_matrix,
    simulate_exact,
    simulate_trajectories,
    to_logical_counts,
)
from utils.exceptions import CalibrationError, MappingError, RunCancelledError, StageError, ZNEError
from utils.specs import CircuitSource, family_source, parse_circuit_source

logger = logging.getLogger(__name__)

load_dotenv()

# --- Configuration ---
DEFAULT_SHOTS = int(os.getenv("ZNE_SHOTS", 10000))
DEFAULT_REPS = int(os.getenv("ZNE_REPS", 5))
DEFAULT_WORKERS = int(os.getenv("ZNE_WORKERS", 1))
DEFAULT_SCALES = [1.0, 1.5, 2.0, 2.5]
DEFAULT_EXTRAPOLATIONS = ["linear", "richardson"]

RUN_METHODS = ("unmitigated",) + FOLD_METHODS
ENGINES = ("auto", "density", "trajectory")
OBSERVABLES = ("success", "z_parity")

POINT_COLUMNS = ["method", "qubits", "lambda", "rep", "mean", "std_err", "shots", "seed"]
SUMMARY_COLUMNS = ["method", "qubits", "intercept_linear", "intercept_richardson", "unmitigated"]


# --- Config and result models ---
class RunConfig(BaseModel):
    """Parameters of one ZNE experiment; validated before anything runs."""
    circuit: str
    noise_model: Optional[str] = None
    method: str = "noise-aware"
    scales: List[float] = Field(default_factory=lambda: list(DEFAULT_SCALES))
    gamma: float = DEFAULT_GAMMA
    shots: int = DEFAULT_SHOTS
    reps: int = DEFAULT_REPS
    seed: int = 0
    engine: str = "auto"
    map_circuit: bool = True
    append_folds: bool = False
    readout: bool = True
    observable: str = "success"
    target: Optional[str] = None
    extrapolations: List[str] = Field(default_factory=lambda: list(DEFAULT_EXTRAPOLATIONS))
    per_rep_fits: bool = False
    workers: int = DEFAULT_WORKERS
    dump_matrix: Optional[str] = None

    @field_validator("method")
    @classmethod
    def _known_method(cls, value: str) -> str:
        if value not in RUN_METHODS:
            raise ValueError(f"method must be one of {', '.join(RUN_METHODS)}")
        return value

    @field_validator("engine")
    @classmethod
    def _known_engine(cls, value: str) -> str:
        if value not in ENGINES:
            raise ValueError(f"engine must be one of {', '.join(ENGINES)}")
        return value

    @field_validator("observable")
    @classmethod
    def _known_observable(cls, value: str) -> str:
        if value not in OBSERVABLES:
            raise ValueError(f"observable must be one of {', '.join(OBSERVABLES)}")
        return value

    @field_validator("scales")
    @classmethod
    def _valid_scales(cls, value: List[float]) -> List[float]:
        if not value:
            raise ValueError("at least one scale factor is required")
        if any(not s >= 1 for s in value):
            raise ValueError("scale factors must be >= 1")
        if len(set(value)) != len(value):
            raise ValueError("scale factors must be distinct")
        return sorted(value)

    @field_validator("extrapolations")
    @classmethod
    def _linear_first(cls, value: List[str]) -> List[str]:
        return ["linear"] + [m for m in dict.fromkeys(value) if m != "linear"]

    @field_validator("shots", "reps", "workers")
    @classmethod
    def _positive(cls, value: int) -> int:
        if value < 1:
            raise ValueError("must be at least 1")
        return value

    @field_validator("gamma")
    @classmethod
    def _positive_gamma(cls, value: float) -> float:
        if not value > 0:
            raise ValueError("gamma must be positive")
        return value

    @model_validator(mode="after")
    def _unmitigated_runs_once(self) -> "RunConfig":
        if self.method == "unmitigated":
            self.scales = [1.0]
        return self

    def fingerprint(self) -> str:
        """Hash of everything that determines the numbers in a result."""
        payload = self.model_dump_json(exclude={"workers", "dump_matrix"})
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


class PointResult(BaseModel):
    scale: float
    rep: int
    mean: float
    std_err: float
    shots: int
    seed: int


class AveragedPoint(BaseModel):
    scale: float
    mean: float
    std_err: float
    shots: int


class FitResult(BaseModel):
    method: str
    intercept: float
    coefficients: List[float]
    diagnostics: Dict[str, float] = {}


class FoldSummary(BaseModel):
    scale: float
    gate_count: int
    inserted_gates: int
    pair_folds: Dict[str, int] = {}
    epsilon_max: Optional[float] = None


class RunResult(BaseModel):
    method: str
    circuit: str
    qubits: int
    seed: int
    config_hash: str
    backend: str = ""
    calibration_date: str = ""
    engine: str
    layout: List[Tuple[int, int]]
    final_layout: List[Tuple[int, int]]
    swap_count: int
    active_qubits: List[int]
    points: List[PointResult]
    averages: List[AveragedPoint]
    unmitigated: Optional[float] = None
    fits: Dict[str, FitResult] = {}
    per_rep_fits: Dict[int, Dict[str, float]] = {}
    folds: List[FoldSummary] = []
    degenerate_scales: List[float] = []

    def intercept(self, method: str = "linear") -> Optional[float]:
        fit = self.fits.get(method)
        return fit.intercept if fit else None


class SweepRow(BaseModel):
    method: str
    qubits: int
    result: Optional[RunResult] = None
    error: Optional[str] = None


# --- Pipeline ---
@contextmanager
def _stage(name: str):
    try:
        yield
    except StageError:
        raise
    except ZNEError as e:
        logger.error("Stage '%s' failed: %s", name, e)
        raise StageError(name, e) from e


def _measured(circuit: Circuit) -> Circuit:
    if circuit.is_measured:
        return circuit
    return Circuit(circuit.num_qubits, circuit.gates + (Gate(GateKind.MEASURE_ALL),))


def build_observable(config: RunConfig, source: CircuitSource, circuit: Circuit) -> Observable:
    """
    The observable a run scores. Success targets come from the config, the
    circuit family, or else the most likely noiseless outcome.
    """
    if config.observable == "z_parity":
        return Observable.z_parity()
    if config.target:
        qubits = None if len(config.target) == circuit.num_qubits else range(len(config.target))
        return Observable.success(config.target, qubits)
    if source.target:
        return Observable.success(source.target, source.target_qubits)

    probs = np.abs(simulate_exact(circuit)) ** 2
    best = int(np.argmax(probs))
    if probs[best] < 1 - 1e-9:
        logger.warning(
            "Ideal output of '%s' is not deterministic (P=%.4f); scoring the most likely bitstring",
            source.name, probs[best],
        )
    return Observable.success(format(best, f"0{circuit.num_qubits}b"))


def _premapped(circuit: Circuit, model: NoiseModel) -> RoutedCircuit:
    if circuit.num_qubits > model.num_qubits:
        raise MappingError(f"circuit needs {circuit.num_qubits} qubits, device has {model.num_qubits}")
    for position, gate in enumerate(circuit.unitary_gates):
        if gate.is_two_qubit and not model.is_coupled(*gate.qubits):
            raise MappingError(f"gate {position} ({gate}) is not on a coupled pair")
    identity = Layout.identity(circuit.num_qubits)
    return RoutedCircuit(Circuit(model.num_qubits, circuit.gates), identity, identity, 0)


def select_engine(num_qubits: int, engine: str) -> str:
    if engine == "auto":
        return "density" if num_qubits <= DENSITY_MAX_QUBITS else "trajectory"
    return engine


def _seed_for(seed: int, rep: int, scale_index: int) -> int:
    return int(np.random.SeedSequence([seed, rep, scale_index]).generate_state(1)[0])


def _pair_label(pair: Tuple[int, int], active: Tuple[int, ...]) -> str:
    return f"{active[pair[0]]}_{active[pair[1]]}"


def run(
    config: RunConfig,
    model: NoiseModel | None = None,
    cancel: threading.Event | None = None,
) -> RunResult:
    """
    Runs one experiment: parse -> layout -> route -> for each repetition and
    λ: fold -> simulate -> expectation, then extrapolates the averaged series.

    Args:
        config: The validated run configuration.
        model: A preloaded noise model; read from ``config.noise_model`` if None.
        cancel: When set, the run stops before its next (repetition, λ) point.

    Raises:
        StageError: Wrapping the first failure with the stage it happened in.
        RunCancelledError: If ``cancel`` was set while the run was in progress.
    """
    with _stage("parse"):
        source = parse_circuit_source(config.circuit)
        logical = _measured(source.circuit)
        if model is None:
            if not config.noise_model:
                raise CalibrationError("no noise model given")
            model = load_noise_model(config.noise_model)
        if not config.readout:
            model = model.without_readout()

    with _stage("simulate"):
        observable = build_observable(config, source, logical)

    with _stage("layout"):
        layout = noise_adaptive_layout(logical, model) if config.map_circuit else None

    with _stage("route"):
        routed = route(logical, layout, model) if layout is not None else _premapped(logical, model)
        physical, active = compact(routed.circuit, keep=routed.final_layout.logical_to_physical)
        device = model.subset(active)
        bit_map = readout_map(routed.final_layout, active)

    with _stage("accumulate"):
        matrix = accumulate(physical, device)
    if config.dump_matrix:
        with _stage("output"):
            _write_text(config.dump_matrix, matrix.to_json())

    engine = select_engine(physical.num_qubits, config.engine)
    logger.info(
        "Running '%s' with %s folding on %d active qubit(s), %s engine, λ=%s",
        source.name, config.method, physical.num_qubits, engine, config.scales,
    )

    points: List[PointResult] = []
    summaries: List[FoldSummary] = []
    distributions: Dict[Circuit, np.ndarray] = {}

    for rep in range(config.reps):
        for index, scale in enumerate(config.scales):
            if cancel is not None and cancel.is_set():
                raise RunCancelledError(f"run cancelled after {len(points)} point(s)")
            seed = _seed_for(config.seed, rep, index)
            with _stage("fold"):
                folded, summary = _fold_one(physical, device, active, config, scale, seed)
            if rep == 0:
                summaries.append(summary)

            with _stage("simulate"):
                if engine == "density":
                    if folded not in distributions:
                        distributions[folded] = simulate_density_matrix(folded, device)
                    counts = sample_counts(distributions[folded], config.shots, seed, folded.num_qubits)
                else:
                    counts = simulate_trajectories(
                        folded, device, config.shots, seed, workers=config.workers
                    ).counts
                estimate = expectation(to_logical_counts(counts, bit_map), observable, scale)
            points.append(PointResult(
                scale=scale, rep=rep, mean=estimate.mean, std_err=estimate.std_err,
                shots=estimate.shots, seed=seed,
            ))

    averages = _average(points, config.scales, config.reps)
    unmitigated = next((a.mean for a in averages if a.scale == 1.0), None)

    fits: Dict[str, FitResult] = {}
    per_rep: Dict[int, Dict[str, float]] = {}
    if len(config.scales) < 2:
        logger.info("Single scale factor; skipping extrapolation")
    else:
        with _stage("extrapolate"):
            fits = _fit_all(averages, config.extrapolations)
            if config.per_rep_fits:
                for rep in range(config.reps):
                    rep_points = [p for p in points if p.rep == rep]
                    per_rep[rep] = {m: f.intercept for m, f in _fit_all(rep_points, config.extrapolations).items()}

    degenerate = sorted({p.scale for p in points if p.mean == 0.0})
    if degenerate:
        logger.warning("Zero expectation at λ=%s; extrapolated values are unreliable", degenerate)

    result = RunResult(
        method=config.method,
        circuit=source.name,
        qubits=logical.num_qubits,
        seed=config.seed,
        config_hash=config.fingerprint(),
        backend=model.backend,
        calibration_date=model.date,
        engine=engine,
        layout=routed.initial_layout.to_pairs(),
        final_layout=routed.final_layout.to_pairs(),
        swap_count=routed.swap_count,
        active_qubits=list(active),
        points=points,
        averages=averages,
        unmitigated=unmitigated,
        fits=fits,
        per_rep_fits=per_rep,
        folds=summaries,
        degenerate_scales=degenerate,
    )
    logger.info(
        "Finished '%s' (%s): unmitigated=%s linear=%s",
        source.name, config.method, unmitigated, result.intercept("linear"),
    )
    return result


def _fold_one(
    physical: Circuit,
    device: NoiseModel,
    active: Tuple[int, ...],
    config: RunConfig,
    scale: float,
    seed: int,
) -> Tuple[Circuit, FoldSummary]:
    if config.method == "unmitigated":
        return physical, FoldSummary(scale=scale, gate_count=physical.depth, inserted_gates=0)
    if config.method == "noise-aware":
        plan = plan_noise_aware(physical, scale, config.gamma, device)
        folded = apply_noise_aware_plan(physical, plan, config.append_folds)
        return folded, FoldSummary(
            scale=scale,
            gate_count=folded.depth,
            inserted_gates=folded.inserted_count(),
            pair_folds={_pair_label(p.pair, active): p.folds for p in plan.pairs},
            epsilon_max=plan.threshold.epsilon_max,
        )
    folded = fold(physical, config.method, scale, seed=seed)
    return folded, FoldSummary(scale=scale, gate_count=folded.depth, inserted_gates=folded.inserted_count())


def _average(points: List[PointResult], scales: List[float], reps: int) -> List[AveragedPoint]:
    """
    Arithmetic mean of per-repetition means. Its std_err propagates the
    per-repetition binomial standard errors through the mean,
    sqrt(Σ se²) / reps; the scatter between repetitions is not used.
    """
    averages = []
    for scale in scales:
        group = [p for p in points if p.scale == scale]
        averages.append(AveragedPoint(
            scale=scale,
            mean=float(np.mean([p.mean for p in group])),
            std_err=float(np.sqrt(np.sum([p.std_err ** 2 for p in group])) / reps),
            shots=group[0].shots,
        ))
    return averages


def _fit_all(points, methods: List[str]) -> Dict[str, FitResult]:
    data = ExtrapolationInput.from_estimates(points)
    fits = {}
    for method in methods:
        fit = extrapolate(data, method)
        fits[method] = FitResult(
            method=fit.method,
            intercept=fit.intercept,
            coefficients=list(fit.coefficients),
            diagnostics=dict(fit.diagnostics),
        )
    return fits


# --- Sweep ---
def sweep(
    template: RunConfig,
    qubit_counts: List[int],
    methods: List[str],
    family: str = "cnot-chain",
    model: NoiseModel | None = None,
) -> List[SweepRow]:
    """
    One run per (qubit count, method) cell, executed on a pool of
    ``template.workers`` threads. A failing cell is recorded and the sweep
    continues. Rows come back ordered by qubit count, then method.
    """
    unknown = [m for m in methods if m not in RUN_METHODS]
    if unknown:
        raise ValueError(f"unknown sweep method(s): {', '.join(unknown)}")
    if model is None:
        with _stage("parse"):
            if not template.noise_model:
                raise CalibrationError("no noise model given")
            model = load_noise_model(template.noise_model)

    cells = [(n, m) for n in qubit_counts for m in methods]

    def run_cell(cell: Tuple[int, str]) -> SweepRow:
        n, method = cell
        try:
            config = RunConfig(**{
                **template.model_dump(),
                "circuit": family_source(family, n),
                "method": method,
                "scales": template.scales,
                "seed": int(np.random.SeedSequence([template.seed, n]).generate_state(1)[0]),
                "dump_matrix": None,
                "workers": 1,
            })
            return SweepRow(method=method, qubits=n, result=run(config, model))
        except (ZNEError, ValidationError, np.linalg.LinAlgError) as e:
            logger.error("Sweep cell %s/%d failed: %s", method, n, e)
            return SweepRow(method=method, qubits=n, error=str(e))

    with ThreadPoolExecutor(max_workers=template.workers) as pool:
        rows = list(pool.map(run_cell, cells))
    order = {m: i for i, m in enumerate(methods)}
    return sorted(rows, key=lambda r: (r.qubits, order[r.method]))


# --- Output ---
def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def _write_text(path: str | pathlib.Path, text: str):
    try:
        pathlib.Path(path).write_text(text, encoding="utf-8")
    except OSError as e:
        raise ZNEError(f"cannot write {path}: {e}") from e


def write_csv(results: List[RunResult], path: str | pathlib.Path):
    """Points section, a blank line, then one summary row per result."""
    try:
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=POINT_COLUMNS, lineterminator="\n")
            writer.writeheader()
            for result in results:
                for p in result.points:
                    writer.writerow({
                        "method": result.method, "qubits": result.qubits, "lambda": _fmt(p.scale),
                        "rep": p.rep, "mean": _fmt(p.mean), "std_err": _fmt(p.std_err),
                        "shots": p.shots, "seed": p.seed,
                    })
            f.write("\n")
            writer = csv.DictWriter(f, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
            writer.writeheader()
            for result in results:
                writer.writerow({
                    "method": result.method,
                    "qubits": result.qubits,
                    "intercept_linear": _fmt(result.intercept("linear")),
                    "intercept_richardson": _fmt(result.intercept("richardson")),
                    "unmitigated": _fmt(result.unmitigated),
                })
    except OSError as e:
        raise ZNEError(f"cannot write {path}: {e}") from e


def write_gnuplot(results: List[RunResult], path: str | pathlib.Path):
    """
    gnuplot data file: one index block per method with the averaged points
    (qubits lambda mean std_err), then a summary block per method
    (qubits unmitigated intercept_linear intercept_richardson).
    """
    methods = list(dict.fromkeys(r.method for r in results))
    blocks = []
    for method in methods:
        lines = [f"# method={method} averaged points", "# qubits lambda mean std_err"]
        for r in (r for r in results if r.method == method):
            lines += [f"{r.qubits} {_fmt(a.scale)} {_fmt(a.mean)} {_fmt(a.std_err)}" for a in r.averages]
        blocks.append("\n".join(lines))
    for method in methods:
        lines = [f"# method={method} summary", "# qubits unmitigated intercept_linear intercept_richardson"]
        for r in (r for r in results if r.method == method):
            values = (r.unmitigated, r.intercept("linear"), r.intercept("richardson"))
            lines.append(" ".join([str(r.qubits)] + [_fmt(v) if v is not None else "NaN" for v in values]))
        blocks.append("\n".join(lines))
    _write_text(path, "\n\n\n".join(blocks) + "\n")


def write_outputs(results: List[RunResult], path: str | pathlib.Path) -> Tuple[pathlib.Path, pathlib.Path]:
    """Writes the CSV at ``path`` and the gnuplot file next to it."""
    csv_path = pathlib.Path(path)
    dat_path = csv_path.with_suffix(".dat")
    with _stage("output"):
        write_csv(results, csv_path)
        write_gnuplot(results, dat_path)
    logger.info("Wrote %s and %s", csv_path, dat_path)
    return csv_path, dat_path
