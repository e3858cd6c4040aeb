"""
Noiseless statevector oracle and the two noisy engines.

Noise is a symmetric depolarizing channel after every gate, with strength
equal to the gate's calibration error; a SWAP runs as three noisy CX gates.
Readout error is a per-qubit confusion matrix applied at measurement.

- Density matrix: exact outcome distribution, up to DENSITY_MAX_QUBITS.
- Trajectories: batches of pure states with stochastic Pauli injection,
  up to TRAJECTORY_MAX_QUBITS. Shots run in fixed-size blocks, each seeded
  from its own SeedSequence child, so counts depend only on the seed and
  never on the number of worker threads.

Bitstrings list qubit 0 first; qubit 0 is the most significant bit of a
statevector index.
"""
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Mapping, Sequence

import numpy as np
from dotenv import load_dotenv

from circuit_ir import Circuit, Gate, GateKind
from noise_model import NoiseModel
from utils.exceptions import SimulationError

logger = logging.getLogger(__name__)

load_dotenv()

# --- Configuration ---
DENSITY_MAX_QUBITS = int(os.getenv("ZNE_DENSITY_MAX_QUBITS", 10))
TRAJECTORY_MAX_QUBITS = int(os.getenv("ZNE_TRAJECTORY_MAX_QUBITS", 20))
EXACT_MAX_QUBITS = 20
TRACE_TOLERANCE = 1e-9
# Upper bound on amplitudes held by one trajectory block.
BLOCK_AMPLITUDES = 2 ** 22
MAX_BLOCK_SHOTS = 1024

# Gate matrices
_SQRT2_INV = 1 / math.sqrt(2)
_PAULIS = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)
_GATE_CACHE = {
    GateKind.X: _PAULIS[1],
    GateKind.Z: _PAULIS[3],
    GateKind.H: np.array([[1, 1], [1, -1]], dtype=complex) * _SQRT2_INV,
    GateKind.S: np.array([[1, 0], [0, 1j]], dtype=complex),
    GateKind.T: np.array([[1, 0], [0, np.exp(1j * math.pi / 4)]], dtype=complex),
    GateKind.CX: np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex),
    GateKind.SWAP: np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex),
}


def gate_unitary(gate: Gate) -> np.ndarray:
    """Matrix of ``gate`` in the basis of its qubits, first qubit most significant."""
    if gate.kind is GateKind.RZ:
        return np.array([[1, 0], [0, np.exp(1j * gate.angle)]], dtype=complex)
    if gate.kind not in _GATE_CACHE:
        raise SimulationError(f"no unitary for '{gate.kind.value}'")
    return _GATE_CACHE[gate.kind]


@lru_cache(maxsize=2)
def _non_identity_paulis(num_qubits: int) -> tuple[np.ndarray, ...]:
    if num_qubits == 1:
        return _PAULIS[1:]
    return tuple(np.kron(a, b) for a in _PAULIS for b in _PAULIS)[1:]


def _apply(tensor: np.ndarray, matrix: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    """Contracts a 2^k x 2^k matrix into the given tensor axes."""
    k = len(axes)
    operator = matrix.reshape((2,) * (2 * k))
    result = np.tensordot(operator, tensor, axes=(list(range(k, 2 * k)), list(axes)))
    return np.moveaxis(result, list(range(k)), list(axes))


@dataclass(frozen=True)
class _Step:
    unitary: np.ndarray
    qubits: tuple[int, ...]
    error: float


def _noisy_steps(circuit: Circuit, model: NoiseModel | None) -> Iterator[_Step]:
    """Unitary steps with their depolarizing strength; SWAP becomes three CX."""
    cx = _GATE_CACHE[GateKind.CX]
    for gate in circuit.unitary_gates:
        if gate.kind is GateKind.SWAP:
            a, b = gate.qubits
            error = model.error(a, b) if model is not None else 0.0
            for qubits in ((a, b), (b, a), (a, b)):
                yield _Step(cx, qubits, error)
        else:
            error = model.gate_error(gate) if model is not None else 0.0
            yield _Step(gate_unitary(gate), gate.qubits, error)


def _check_width(circuit: Circuit, limit: int, engine: str, model: NoiseModel | None = None):
    if circuit.num_qubits > limit:
        raise SimulationError(
            f"{engine} engine handles at most {limit} qubits, circuit has {circuit.num_qubits}"
        )
    if model is not None and model.num_qubits < circuit.num_qubits:
        raise SimulationError(
            f"noise model covers {model.num_qubits} qubits, circuit has {circuit.num_qubits}"
        )


def _zero_states(batch: int, num_qubits: int) -> np.ndarray:
    states = np.zeros((batch,) + (2,) * num_qubits, dtype=complex)
    states[(slice(None),) + (0,) * num_qubits] = 1.0
    return states


def simulate_exact(circuit: Circuit) -> np.ndarray:
    """
    Noiseless statevector of ``circuit`` (measurement ignored).

    Returns:
        A normalized complex vector of length 2^n.

    Raises:
        SimulationError: If the circuit is wider than 20 qubits.
    """
    _check_width(circuit, EXACT_MAX_QUBITS, "exact")
    state = _zero_states(1, circuit.num_qubits)
    for gate in circuit.unitary_gates:
        state = _apply(state, gate_unitary(gate), [q + 1 for q in gate.qubits])
    return state.reshape(-1)


def fidelity(state_a: np.ndarray, state_b: np.ndarray) -> float:
    """|<a|b>|^2 of two pure states."""
    return float(abs(np.vdot(state_a, state_b)) ** 2)


def probabilities(state: np.ndarray) -> np.ndarray:
    return np.abs(state) ** 2


# --- Density matrix engine ---
def _depolarize(rho: np.ndarray, qubits: Sequence[int], p: float, n: int) -> np.ndarray:
    """ρ -> (1-p)ρ + p/(d²-1) (d·Tr_Q(ρ)⊗I - ρ), the uniform non-identity Pauli mixture."""
    d = 2 ** len(qubits)
    mixed = rho
    for q in qubits:
        traced = np.trace(mixed, axis1=q, axis2=q + n)
        mixed = np.moveaxis(np.multiply.outer(traced, np.eye(2)), [-2, -1], [q, q + n])
    twirled = d * mixed - rho
    return (1 - p) * rho + p / (d * d - 1) * twirled


def _trace(rho: np.ndarray, n: int) -> complex:
    return np.trace(rho.reshape(2 ** n, 2 ** n))


def readout_confusion(model: NoiseModel, qubit: int) -> np.ndarray:
    """M[measured, prepared] for one qubit."""
    p01, p10 = model.readout_error(qubit)
    return np.array([[1 - p10, p01], [p10, 1 - p01]])


def apply_readout(probs: np.ndarray, model: NoiseModel, num_qubits: int) -> np.ndarray:
    """Pushes an ideal outcome distribution through every qubit's confusion matrix."""
    tensor = probs.reshape((2,) * num_qubits)
    for q in range(num_qubits):
        if any(model.readout_error(q)):
            tensor = _apply(tensor, readout_confusion(model, q), [q])
    return tensor.reshape(-1)


def simulate_density_matrix(circuit: Circuit, model: NoiseModel) -> np.ndarray:
    """
    Exact outcome distribution under depolarizing gate noise and readout error.

    Returns:
        Probabilities indexed like the statevector (qubit 0 most significant).

    Raises:
        SimulationError: If the circuit exceeds DENSITY_MAX_QUBITS or the
            state loses normalization.
    """
    n = circuit.num_qubits
    _check_width(circuit, DENSITY_MAX_QUBITS, "density-matrix", model)

    rho = np.zeros((2,) * (2 * n), dtype=complex)
    rho[(0,) * (2 * n)] = 1.0
    for position, step in enumerate(_noisy_steps(circuit, model)):
        rho = _apply(rho, step.unitary, step.qubits)
        rho = _apply(rho, step.unitary.conj(), [q + n for q in step.qubits])
        if step.error > 0:
            rho = _depolarize(rho, step.qubits, step.error, n)
            trace = _trace(rho, n)
            if abs(trace - 1) > TRACE_TOLERANCE:
                raise SimulationError(f"density matrix trace {trace.real:.12g} after step {position}")

    probs = np.clip(np.real(np.diagonal(rho.reshape(2 ** n, 2 ** n))), 0.0, None)
    probs = apply_readout(probs, model, n)
    return probs / probs.sum()


def distribution(probs: np.ndarray, num_qubits: int, cutoff: float = 0.0) -> dict[str, float]:
    """{bitstring: probability} for entries above ``cutoff``."""
    return {
        format(i, f"0{num_qubits}b"): float(p) for i, p in enumerate(probs) if p > cutoff
    }


def sample_counts(probs: np.ndarray, shots: int, seed, num_qubits: int) -> dict[str, int]:
    """Multinomial shot sampling from an exact distribution."""
    if shots < 1:
        raise SimulationError(f"shots must be positive, got {shots}")
    rng = np.random.default_rng(seed)
    drawn = rng.multinomial(shots, probs / probs.sum())
    return {format(int(i), f"0{num_qubits}b"): int(drawn[i]) for i in np.flatnonzero(drawn)}


# --- Trajectory engine ---
def block_size(num_qubits: int) -> int:
    return max(1, min(MAX_BLOCK_SHOTS, BLOCK_AMPLITUDES // 2 ** num_qubits))


def _run_block(steps: list[_Step], model: NoiseModel, n: int, shots: int, rng: np.random.Generator) -> np.ndarray:
    states = _zero_states(shots, n)
    for step in steps:
        axes = [q + 1 for q in step.qubits]
        states = _apply(states, step.unitary, axes)
        if step.error <= 0:
            continue
        hit = rng.random(shots) < step.error
        paulis = _non_identity_paulis(len(step.qubits))
        choice = rng.integers(len(paulis), size=shots)
        for index in np.unique(choice[hit]):
            rows = hit & (choice == index)
            states[rows] = _apply(states[rows], paulis[index], axes)

    probs = (np.abs(states) ** 2).reshape(shots, -1)
    cdf = np.cumsum(probs, axis=1)
    cdf /= cdf[:, -1:]
    draws = rng.random(shots)
    outcomes = np.minimum((cdf <= draws[:, None]).sum(axis=1), 2 ** n - 1)

    for q in range(n):
        p01, p10 = model.readout_error(q)
        if p01 == 0 and p10 == 0:
            continue
        shift = n - 1 - q
        bit = (outcomes >> shift) & 1
        flips = rng.random(shots) < np.where(bit == 1, p01, p10)
        outcomes = outcomes ^ (flips.astype(outcomes.dtype) << shift)
    return outcomes


@dataclass(frozen=True)
class TrajectoryResult:
    counts: dict[str, int]
    estimate: "ExpectationEstimate | None" = None


def simulate_trajectories(
    circuit: Circuit,
    model: NoiseModel,
    shots: int,
    seed: int,
    observable: "Observable | None" = None,
    workers: int = 1,
    scale: float = 1.0,
) -> TrajectoryResult:
    """
    Monte Carlo Pauli-injection sampling of ``shots`` bitstrings.

    After each gate, with probability p a uniformly chosen non-identity Pauli
    (one of 3, or one of 15 for two-qubit gates) hits the gate's qubits.

    Args:
        circuit: Circuit to run, measured on all qubits.
        model: Noise model covering the circuit's qubits.
        shots: Number of shots.
        seed: Root seed; block b draws from SeedSequence(seed, spawn_key=(b,)).
        observable: If given, the result carries its estimate.
        workers: Threads used to run shot blocks.
        scale: Scale factor recorded on the estimate.

    Raises:
        SimulationError: On zero shots or a circuit above TRAJECTORY_MAX_QUBITS.
    """
    if shots < 1:
        raise SimulationError(f"shots must be positive, got {shots}")
    n = circuit.num_qubits
    _check_width(circuit, TRAJECTORY_MAX_QUBITS, "trajectory", model)
    steps = list(_noisy_steps(circuit, model))

    size = block_size(n)
    sizes = [min(size, shots - start) for start in range(0, shots, size)]

    def run(block: int) -> np.ndarray:
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))
        return _run_block(steps, model, n, sizes[block], rng)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        blocks = list(pool.map(run, range(len(sizes))))

    outcomes, tallies = np.unique(np.concatenate(blocks), return_counts=True)
    counts = {format(int(o), f"0{n}b"): int(c) for o, c in zip(outcomes, tallies)}
    logger.debug("Trajectories: %d shots in %d block(s) on %d qubits", shots, len(sizes), n)

    estimate = expectation(counts, observable, scale) if observable is not None else None
    return TrajectoryResult(counts, estimate)


# --- Observables ---
@dataclass(frozen=True)
class Observable:
    """
    Success probability of ``target`` on ``qubits``, or the probability of
    even Z parity on ``qubits``. ``qubits`` defaults to every bit.
    """
    kind: str
    target: str | None = None
    qubits: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("success", "z_parity"):
            raise SimulationError(f"unknown observable '{self.kind}'")
        if self.kind == "success":
            if not self.target or any(c not in "01" for c in self.target):
                raise SimulationError(f"success target must be a bitstring, got {self.target!r}")
            if self.qubits is not None and len(self.qubits) != len(self.target):
                raise SimulationError(
                    f"target '{self.target}' has {len(self.target)} bits for {len(self.qubits)} qubits"
                )

    @classmethod
    def success(cls, target: str, qubits: Sequence[int] | None = None) -> "Observable":
        return cls("success", target, tuple(qubits) if qubits is not None else None)

    @classmethod
    def z_parity(cls, qubits: Sequence[int] | None = None) -> "Observable":
        return cls("z_parity", None, tuple(qubits) if qubits is not None else None)

    def hits(self, bitstring: str) -> bool:
        qubits = self.qubits
        if qubits is None:
            if self.kind == "success" and len(bitstring) != len(self.target):
                raise SimulationError(
                    f"bitstring '{bitstring}' does not match target width {len(self.target)}"
                )
            qubits = range(len(bitstring))
        elif max(qubits, default=-1) >= len(bitstring):
            raise SimulationError(f"bitstring '{bitstring}' is too short for qubits {qubits}")
        bits = "".join(bitstring[q] for q in qubits)
        if self.kind == "success":
            return bits == self.target
        return bits.count("1") % 2 == 0


@dataclass(frozen=True)
class ExpectationEstimate:
    """Shot estimate Ê(λ) with binomial standard error sqrt(m(1-m)/N)."""
    mean: float
    std_err: float
    shots: int
    scale: float = 1.0

    @property
    def degenerate(self) -> bool:
        """True when no shot succeeded; extrapolating through it is unreliable."""
        return self.mean == 0.0


def expectation(counts: Mapping[str, int], observable: Observable, scale: float = 1.0) -> ExpectationEstimate:
    """
    Fraction of shots satisfying ``observable``.

    Raises:
        SimulationError: On empty counts or a bitstring width mismatch.
    """
    shots = sum(counts.values())
    if shots <= 0:
        raise SimulationError("counts are empty")
    hits = sum(c for bitstring, c in counts.items() if observable.hits(bitstring))
    mean = hits / shots
    return ExpectationEstimate(mean, math.sqrt(mean * (1 - mean) / shots), shots, scale)


def to_logical_counts(counts: Mapping[str, int], readout_map: Sequence[int]) -> dict[str, int]:
    """Reorders measured bitstrings so bit q is logical qubit q."""
    logical: dict[str, int] = {}
    for bitstring, c in counts.items():
        key = "".join(bitstring[j] for j in readout_map)
        logical[key] = logical.get(key, 0) + c
    return logical
