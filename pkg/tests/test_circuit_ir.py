import math

import numpy as np
import pytest

from circuit_ir import (
    Circuit,
    Gate,
    GateKind,
    bernstein_vazirani,
    cnot_chain,
    compact,
    inverse,
    parse_circuit,
    random_circuit,
    serialize,
)
from utils.exceptions import CircuitError, CircuitParseError

# --- Parsing ---

def test_parse_basic_circuit():
    """Tests that a header, gates and a terminal measure are parsed."""
    circuit = parse_circuit("qubits 2\nh 0\ncx 0 1\nmeasure\n")
    assert circuit.num_qubits == 2
    assert [g.kind for g in circuit.gates] == [GateKind.H, GateKind.CX, GateKind.MEASURE_ALL]
    assert circuit.is_measured
    assert circuit.depth == 2


def test_parse_comments_and_case():
    """Tests that comments and blank lines are skipped and mnemonics are case-insensitive."""
    circuit = parse_circuit("# bell\nQUBITS 2  # header\n\nH 0\nCX 0 1 # entangle\nRZ 1 0.25\n")
    assert [g.kind for g in circuit.gates] == [GateKind.H, GateKind.CX, GateKind.RZ]
    assert circuit.gates[2].angle == 0.25
    assert not circuit.is_measured


@pytest.mark.parametrize("text, line", [
    ("h 0\n", 1),
    ("qubits 2\ncx 0 5\n", 2),
    ("qubits 2\nfoo 0\n", 2),
    ("qubits 1\nmeasure\nx 0\n", 3),
    ("qubits 1\nrz 0\n", 2),
    ("qubits 1\nrz 0 inf\n", 2),
    ("qubits 2\ncx 1 1\n", 2),
    ("qubits 2\nqubits 3\n", 2),
    ("", 1),
])
def test_parse_errors_carry_line_numbers(text, line):
    """Tests that malformed programs raise CircuitParseError with the offending line."""
    with pytest.raises(CircuitParseError) as info:
        parse_circuit(text)
    assert info.value.line_number == line
    assert str(info.value).startswith(f"line {line}:")


@pytest.mark.parametrize("seed", range(100))
def test_serialize_round_trip(seed):
    """Tests that serialized circuits, angles included, parse back identically."""
    rng = np.random.default_rng(seed)
    circuit = random_circuit(int(rng.integers(1, 9)), int(rng.integers(0, 60)), seed=seed, measure=True)
    assert parse_circuit(serialize(circuit)) == circuit

# --- Structure ---

def test_gate_validation():
    """Tests that invalid gates are rejected."""
    with pytest.raises(CircuitError):
        Gate(GateKind.CX, (0, 0))
    with pytest.raises(CircuitError):
        Gate(GateKind.H, (0, 1))
    with pytest.raises(CircuitError):
        Gate(GateKind.RZ, (0,))
    with pytest.raises(CircuitError):
        Gate(GateKind.X, (-1,))


def test_measure_must_be_last():
    """Tests that a measurement in the middle of a circuit is rejected."""
    with pytest.raises(CircuitError):
        Circuit(1, (Gate(GateKind.MEASURE_ALL), Gate(GateKind.X, (0,))))


def test_qubit_out_of_range():
    with pytest.raises(CircuitError):
        Circuit(2, (Gate(GateKind.CX, (0, 2)),))


def test_with_gates_keeps_measurement():
    """Tests that replacing the body keeps the terminal measurement."""
    circuit = cnot_chain(2)
    replaced = circuit.with_gates([Gate(GateKind.H, (1,))])
    assert replaced.gates == (Gate(GateKind.H, (1,)), Gate(GateKind.MEASURE_ALL))

# --- Inversion ---

def test_inverse_reverses_and_daggers():
    """Tests the dagger of a mixed segment."""
    segment = [
        Gate(GateKind.S, (0,)),
        Gate(GateKind.T, (1,)),
        Gate(GateKind.RZ, (0,), 0.3),
        Gate(GateKind.CX, (0, 1)),
        Gate(GateKind.H, (0,)),
    ]
    assert inverse(segment) == [
        Gate(GateKind.H, (0,)),
        Gate(GateKind.CX, (0, 1)),
        Gate(GateKind.RZ, (0,), -0.3),
        Gate(GateKind.RZ, (1,), -math.pi / 4),
        Gate(GateKind.RZ, (0,), -math.pi / 2),
    ]


def test_double_inverse_is_identity():
    """Tests that inverting twice restores S and T mnemonics."""
    segment = list(random_circuit(3, 40, seed=3).gates)
    assert inverse(inverse(segment)) == segment


@pytest.mark.parametrize("angle", [math.pi / 2, math.pi / 4, -math.pi / 2, -math.pi / 4])
def test_double_inverse_keeps_user_rz(angle):
    """Tests that an RZ at a quarter or eighth turn is never rewritten to S or T."""
    segment = [Gate(GateKind.RZ, (0,), angle), Gate(GateKind.RZ, (1,), angle)]
    once = inverse(segment)
    assert [g.kind for g in once] == [GateKind.RZ, GateKind.RZ]
    assert [g.angle for g in once] == [-angle, -angle]
    twice = inverse(once)
    assert twice == segment
    assert [g.kind for g in twice] == [GateKind.RZ, GateKind.RZ]


def test_double_inverse_restores_s_and_t():
    segment = [Gate(GateKind.S, (0,)), Gate(GateKind.T, (1,))]
    assert [g.kind for g in inverse(segment)] == [GateKind.RZ, GateKind.RZ]
    assert [g.kind for g in inverse(inverse(segment))] == [GateKind.S, GateKind.T]


def test_dagger_provenance_only_on_rz():
    with pytest.raises(CircuitError):
        Gate(GateKind.X, (0,), daggered_from=GateKind.S)


def test_inverse_rejects_measurement():
    with pytest.raises(CircuitError):
        inverse(list(cnot_chain(2).gates))

# --- Generators ---

def test_cnot_chain():
    """Tests the benchmark chain layout."""
    circuit = cnot_chain(3)
    assert [str(g) for g in circuit.gates] == ["x 0", "cx 0 1", "cx 1 2", "measure"]
    with pytest.raises(CircuitError):
        cnot_chain(1)


def test_bernstein_vazirani():
    """Tests that one CX per set secret bit targets the ancilla."""
    circuit = bernstein_vazirani("101")
    assert circuit.num_qubits == 4
    cx = [g for g in circuit.gates if g.kind is GateKind.CX]
    assert [g.qubits for g in cx] == [(0, 3), (2, 3)]
    with pytest.raises(CircuitError):
        bernstein_vazirani("12")


def test_random_circuit_is_seeded():
    assert random_circuit(5, 20, seed=11) == random_circuit(5, 20, seed=11)
    assert random_circuit(5, 20, seed=11) != random_circuit(5, 20, seed=12)


def test_compact_relabels_touched_qubits():
    """Tests that compacting keeps only the used (and requested) qubits."""
    circuit = Circuit(5, (Gate(GateKind.CX, (3, 1)), Gate(GateKind.MEASURE_ALL)))
    compacted, active = compact(circuit)
    assert active == (1, 3)
    assert compacted.num_qubits == 2
    assert compacted.gates[0].qubits == (1, 0)

    _, active = compact(circuit, keep=(4,))
    assert active == (1, 3, 4)
