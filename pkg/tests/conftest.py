import itertools
import pathlib

import numpy as np
import pytest

from circuit_ir import Circuit, Gate, GateKind
from noise_model import NoiseModel, load_noise_model

DATA_DIR = pathlib.Path(__file__).resolve().parent.parent / "data"
MUMBAI_CSV = DATA_DIR / "ibmq_mumbai_2024-03-26.csv"
FOUR_QUBIT_JSON = DATA_DIR / "four_qubit_device.json"


def complete_model(num_qubits: int, seed: int, low: float = 1e-3, high: float = 5e-2) -> NoiseModel:
    """All-to-all device with a random symmetric CX error per pair."""
    rng = np.random.default_rng(seed)
    errors = {}
    for i, k in itertools.combinations(range(num_qubits), 2):
        p = float(rng.uniform(low, high))
        errors[(i, k)] = p
        errors[(k, i)] = p
    return NoiseModel(num_qubits=num_qubits, two_qubit_error=errors)


def star_model(num_qubits: int, cx_error: float = 1e-2) -> NoiseModel:
    return NoiseModel.uniform(num_qubits, [(0, q) for q in range(1, num_qubits)], cx_error, backend="star")


def swap_folding_circuit() -> Circuit:
    """Routed physical circuit with a SWAP on pair (0, 1) and one CX on pair (0, 2)."""
    return Circuit(4, (
        Gate(GateKind.CX, (1, 0)),
        Gate(GateKind.SWAP, (1, 0)),
        Gate(GateKind.CX, (0, 2)),
        Gate(GateKind.MEASURE_ALL),
    ))


@pytest.fixture(scope="session")
def mumbai_model() -> NoiseModel:
    return load_noise_model(MUMBAI_CSV)


@pytest.fixture(scope="session")
def four_qubit_model() -> NoiseModel:
    return load_noise_model(FOUR_QUBIT_JSON)
