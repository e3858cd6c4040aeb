"""Accumulated calibration error of a mapped circuit, per qubit pair."""
import json
import logging
from dataclasses import dataclass

import numpy as np

from circuit_ir import Circuit, GateKind
from noise_model import SWAP_CX_COUNT, NoiseModel
from utils.exceptions import AccumulationError, NoCouplingError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ErrorRateMatrix:
    """
    Upper-triangular n x n table of summed error probabilities at λ = 1.

    Off-diagonal cell (i, j), i < j, sums the CX errors charged to the pair
    (a SWAP counts as three CX); diagonal cell (i, i) sums the one-qubit gate
    errors on qubit i. Values are sums of probabilities and can exceed 1 for
    deep circuits, so treat them as a score.
    """
    cells: np.ndarray

    def __post_init__(self):
        cells = np.triu(np.asarray(self.cells, dtype=float))
        if cells.ndim != 2 or cells.shape[0] != cells.shape[1]:
            raise AccumulationError(f"error-rate matrix must be square, got shape {cells.shape}")
        if np.any(cells < 0):
            raise AccumulationError("error-rate matrix cells must be non-negative")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    @property
    def n(self) -> int:
        return self.cells.shape[0]

    def cell(self, i: int, j: int) -> float:
        i, j = min(i, j), max(i, j)
        return float(self.cells[i, j])

    def max_rate(self, include_diagonal: bool = False) -> float:
        if self.n == 0:
            return 0.0
        values = self.cells if include_diagonal else np.triu(self.cells, k=1)
        return float(values.max())

    def pairs(self) -> list[tuple[tuple[int, int], float]]:
        """Non-zero off-diagonal cells in row-major order."""
        rows, cols = np.nonzero(np.triu(self.cells, k=1))
        return [((int(i), int(j)), float(self.cells[i, j])) for i, j in zip(rows, cols)]

    def scaled(self, scale: float) -> "ErrorRateMatrix":
        return ErrorRateMatrix(self.cells * scale)

    def to_dict(self) -> dict:
        return {
            "num_qubits": self.n,
            "diagonal": [float(v) for v in np.diag(self.cells)],
            "pairs": {f"{i}_{j}": value for (i, j), value in self.pairs()},
            "max_rate": self.max_rate(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def accumulate(circuit: Circuit, model: NoiseModel) -> ErrorRateMatrix:
    """
    Sums per-gate calibration errors of a topology-conformant circuit.

    Raises:
        AccumulationError: If a two-qubit gate sits on an uncoupled pair or a
            qubit is outside the model.
    """
    if circuit.num_qubits > model.num_qubits:
        raise AccumulationError(
            f"circuit uses {circuit.num_qubits} qubits, model has {model.num_qubits}"
        )
    cells = np.zeros((circuit.num_qubits, circuit.num_qubits))
    for position, gate in enumerate(circuit.unitary_gates):
        if gate.is_two_qubit:
            try:
                error = model.error(*gate.qubits)
            except NoCouplingError as e:
                raise AccumulationError(f"gate {position} ({gate}): {e}") from e
            if gate.kind is GateKind.SWAP:
                error *= SWAP_CX_COUNT
            i, j = sorted(gate.qubits)
            cells[i, j] += error
        else:
            q = gate.qubits[0]
            cells[q, q] += model.one_qubit(q)

    matrix = ErrorRateMatrix(cells)
    logger.debug("Accumulated error matrix: %s", matrix.to_dict())
    return matrix


def max_rate(matrix: ErrorRateMatrix, include_diagonal: bool = False) -> float:
    """Highest accumulated pair error; 0 for an all-zero matrix."""
    return matrix.max_rate(include_diagonal=include_diagonal)
