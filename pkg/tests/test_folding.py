import itertools
import math

import numpy as np
import pytest

from accumulation import accumulate
from circuit_ir import Circuit, Gate, GateKind, inverse, random_circuit
from folding import (
    FOLD_METHODS,
    RATE_TOLERANCE,
    fold,
    fold_all,
    fold_from_left,
    fold_global,
    fold_noise_aware,
    fold_plan,
    fold_random,
    plan_noise_aware,
)
from noise_model import NoiseModel
from simulator import fidelity, simulate_exact
from tests.conftest import complete_model, swap_folding_circuit
from utils.exceptions import FoldingError

SCALES = [1, 1.5, 2, 2.5, 3]


def _four_gates() -> Circuit:
    return Circuit(2, (
        Gate(GateKind.X, (0,)),
        Gate(GateKind.S, (1,)),
        Gate(GateKind.CX, (0, 1)),
        Gate(GateKind.T, (0,)),
        Gate(GateKind.MEASURE_ALL),
    ))


def _expected_count(d: int, scale: float) -> int:
    k = int(round(d * (scale - 1) / 2))
    n, s = divmod(k, d)
    return d * (2 * n + 1) + 2 * s

# --- Tests for fold_plan ---

@pytest.mark.parametrize("d, scale, n, s", [(4, 1, 0, 0), (4, 3, 1, 0), (4, 2, 0, 2), (4, 1.5, 0, 1), (3, 3, 1, 0), (4, 4, 1, 2)])
def test_fold_plan(d, scale, n, s):
    plan = fold_plan(d, scale)
    assert (plan.n, plan.s) == (n, s)
    assert plan.k == n * d + s
    assert plan.folded_gate_count == d * (2 * n + 1) + 2 * s


def test_fold_plan_errors():
    with pytest.raises(FoldingError):
        fold_plan(4, 0.5)
    with pytest.raises(FoldingError):
        fold_plan(0, 2)

# --- Tests for global and local folding ---

def test_global_fold_scale_three():
    circuit = _four_gates()
    folded = fold_global(circuit, 3)
    body = list(circuit.unitary_gates)
    assert folded.depth == 12
    assert list(folded.untagged().unitary_gates) == body + inverse(body) + body
    assert folded.gates[-1].is_measurement


def test_global_fold_partial():
    """Tests that λ=2 on four gates appends the dagger of the last two, then the last two."""
    circuit = _four_gates()
    body = list(circuit.unitary_gates)
    folded = fold_global(circuit, 2)
    assert list(folded.untagged().unitary_gates) == body + inverse(body[2:]) + body[2:]
    assert folded.inserted_count() == 4


def test_left_fold_triples_each_gate():
    circuit = Circuit(2, (Gate(GateKind.X, (0,)), Gate(GateKind.CX, (0, 1))))
    folded = fold_from_left(circuit, 3)
    kinds = [g.kind for g in folded.gates]
    assert kinds == [GateKind.X] * 3 + [GateKind.CX] * 3
    assert [g.fold_inserted for g in folded.gates] == [False, True, True, False, True, True]


def test_left_fold_partial():
    """Tests that λ=2 on four gates triples the first two gates only."""
    circuit = _four_gates()
    body = list(circuit.unitary_gates)
    folded = fold_from_left(circuit, 2)
    expected = []
    for position, gate in enumerate(body):
        expected.append(gate)
        if position < 2:
            expected += [inverse([gate])[0], gate]
    assert list(folded.untagged().unitary_gates) == expected


def test_random_fold_is_seeded():
    circuit = _four_gates()
    assert fold_random(circuit, 1.5, seed=1).depth == 6
    assert fold_random(circuit, 1.5, seed=2).depth == 6
    assert fold_random(circuit, 1.5, seed=7) == fold_random(circuit, 1.5, seed=7)


def test_random_fold_full_scale_ignores_seed():
    circuit = _four_gates()
    assert fold_random(circuit, 3, seed=1) == fold_random(circuit, 3, seed=99) == fold_from_left(circuit, 3)


@pytest.mark.parametrize("method", ["global", "left", "random"])
def test_gate_count_law(method):
    """Tests d(2n+1)+2s for every d up to 20 on a 0.1 grid of λ in [1, 4]."""
    scales = np.round(np.arange(1.0, 4.0 + 1e-9, 0.1), 1)
    for d in range(1, 21):
        circuit = random_circuit(3, d, seed=d)
        for scale in scales:
            folded = fold(circuit, method, float(scale), seed=d)
            assert folded.depth == _expected_count(d, float(scale)), (d, scale)


def test_fold_all():
    circuits = fold_all(_four_gates(), "global", [1, 2, 3])
    assert [c.depth for c in circuits] == [4, 8, 12]

# --- Tests shared by every method ---

@pytest.mark.parametrize("method", FOLD_METHODS)
def test_scale_one_is_identity(method, four_qubit_model):
    """Tests that λ=1 returns a gate-identical circuit for every method."""
    circuit = swap_folding_circuit()
    assert fold(circuit, method, 1.0, seed=3, model=four_qubit_model) == circuit


@pytest.mark.parametrize("index", range(50))
def test_folding_preserves_the_unitary(index):
    """Tests that every method keeps the noiseless statevector at every λ."""
    rng = np.random.default_rng(index)
    n = int(rng.integers(2, 7))
    circuit = random_circuit(n, int(rng.integers(1, 13)), seed=index)
    model = complete_model(n, seed=index)
    reference = simulate_exact(circuit)
    for method, scale in itertools.product(FOLD_METHODS, SCALES):
        folded = fold(circuit, method, scale, seed=index, model=model)
        assert fidelity(reference, simulate_exact(folded)) >= 1 - 1e-9, (method, scale)


@pytest.mark.parametrize("method", FOLD_METHODS)
def test_scale_below_one(method, four_qubit_model):
    with pytest.raises(FoldingError):
        fold(swap_folding_circuit(), method, 0.9, model=four_qubit_model)


def test_dispatcher_errors():
    with pytest.raises(FoldingError):
        fold(_four_gates(), "sideways", 2)
    with pytest.raises(FoldingError):
        fold(_four_gates(), "noise-aware", 2)

# --- Tests for noise-aware folding ---

def test_worked_example_rates(four_qubit_model):
    """Tests that λ=4 brings the two pairs to 0.063 and 0.057 with ε_max = 0.063."""
    plan = plan_noise_aware(swap_folding_circuit(), 4, 2.0, four_qubit_model)
    assert plan.threshold.epsilon_circuit == pytest.approx(0.0252)
    assert plan.threshold.epsilon_max == pytest.approx(0.063)
    assert plan.folds() == {(0, 1): 3, (0, 2): 2}
    rates = plan.final_rates()
    assert rates[(0, 1)] == pytest.approx(0.063)
    assert rates[(0, 2)] == pytest.approx(0.057)


def test_scale_two_folds_each_pair_once(four_qubit_model):
    plan = plan_noise_aware(swap_folding_circuit(), 2, 2.0, four_qubit_model)
    assert plan.threshold.epsilon_max == pytest.approx(0.0378)
    assert plan.folds() == {(0, 1): 1, (0, 2): 1}


def test_folds_follow_the_last_gate_on_each_pair(four_qubit_model):
    """Tests placement after the anchor gate with the anchor's orientation."""
    folded = fold_noise_aware(swap_folding_circuit(), 2, 2.0, four_qubit_model)
    cx10, cx02 = Gate(GateKind.CX, (1, 0)), Gate(GateKind.CX, (0, 2))
    assert folded.gates == (
        cx10,
        Gate(GateKind.SWAP, (1, 0)),
        cx10.tagged(), cx10.tagged(),
        cx02,
        cx02.tagged(), cx02.tagged(),
        Gate(GateKind.MEASURE_ALL),
    )


def test_append_folds_at_end(four_qubit_model):
    circuit = swap_folding_circuit()
    folded = fold_noise_aware(circuit, 2, 2.0, four_qubit_model, append_folds=True)
    cx10, cx02 = Gate(GateKind.CX, (1, 0), fold_inserted=True), Gate(GateKind.CX, (0, 2), fold_inserted=True)
    assert folded.gates == circuit.gates[:-1] + (cx10, cx10, cx02, cx02, circuit.gates[-1])


def test_fold_accumulates_to_final_rate(four_qubit_model):
    """Tests that pricing the folded circuit reproduces the planned rates."""
    circuit = swap_folding_circuit()
    plan = plan_noise_aware(circuit, 4, 2.0, four_qubit_model)
    matrix = accumulate(fold_noise_aware(circuit, 4, 2.0, four_qubit_model), four_qubit_model)
    for pair, rate in plan.final_rates().items():
        assert matrix.cell(*pair) == pytest.approx(rate)


def test_closed_form_single_pair():
    """Tests the fold count of a single pair against floor((ε_max - base) / 2e)."""
    model = NoiseModel.line(2, 0.01)
    circuit = Circuit(2, tuple(Gate(GateKind.CX, (0, 1)) for _ in range(3)))
    for scale in [1.5, 2, 2.5, 3, 4, 6]:
        plan = plan_noise_aware(circuit, scale, 0.8, model)
        expected = math.floor((plan.threshold.epsilon_max - 0.03) / 0.02 + 1e-9)
        assert plan.folds() == {(0, 1): max(expected, 0)}


def test_gamma_must_be_positive(four_qubit_model):
    with pytest.raises(FoldingError):
        plan_noise_aware(swap_folding_circuit(), 2, 0.0, four_qubit_model)


@pytest.mark.parametrize("index", range(100))
def test_noise_aware_maximality(index):
    """Tests that every pair stays within ε_max and one more fold would exceed it."""
    rng = np.random.default_rng(1000 + index)
    n = int(rng.integers(2, 7))
    model = complete_model(n, seed=1000 + index)
    circuit = random_circuit(n, int(rng.integers(2, 25)), seed=index)
    scale = float(rng.choice([1.5, 2, 2.5, 3, 4]))
    gamma = float(rng.choice([1.0, 1.5, 2.0]))

    plan = plan_noise_aware(circuit, scale, gamma, model)
    matrix = accumulate(fold_noise_aware(circuit, scale, gamma, model), model)
    epsilon_max = plan.threshold.epsilon_max
    for decision in plan.pairs:
        assert decision.final_rate <= epsilon_max + RATE_TOLERANCE
        assert decision.final_rate + 2 * decision.gate_error > epsilon_max
        assert matrix.cell(*decision.pair) == pytest.approx(decision.final_rate)


def test_fold_counts_grow_with_scale(mumbai_model):
    """Tests that per-pair fold counts never decrease as λ grows."""
    circuit = Circuit(27, (
        Gate(GateKind.CX, (0, 1)),
        Gate(GateKind.CX, (1, 2)),
        Gate(GateKind.CX, (1, 4)),
        Gate(GateKind.CX, (1, 4)),
        Gate(GateKind.CX, (4, 7)),
    ))
    previous = {}
    for scale in [1, 1.5, 2, 2.5, 3, 4, 5]:
        folds = plan_noise_aware(circuit, scale, 2.0, mumbai_model).folds()
        for pair, count in previous.items():
            assert folds[pair] >= count
        previous = folds
    assert sum(previous.values()) > 0
