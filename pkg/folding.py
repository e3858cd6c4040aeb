"""Noise scaling by unitary folding: global, local (left/random) and noise-aware."""
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from accumulation import accumulate
from circuit_ir import Circuit, Gate, GateKind, inverse
from noise_model import NoiseModel
from utils.exceptions import FoldingError

logger = logging.getLogger(__name__)

FOLD_METHODS = ("global", "left", "random", "noise-aware")
DEFAULT_GAMMA = 2.0

# Slack for comparing float sums of error rates against the threshold.
RATE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class FoldPlan:
    """How many whole folds (n) and partial folds (s) reach ``scale`` on d gates."""
    scale: float
    num_gates: int
    n: int
    s: int
    subset: tuple[int, ...] = ()

    @property
    def k(self) -> int:
        return self.n * self.num_gates + self.s

    @property
    def folded_gate_count(self) -> int:
        return self.num_gates * (2 * self.n + 1) + 2 * self.s


@dataclass(frozen=True)
class ScaledThreshold:
    """ε_max = (ε_circuit + ε_circuit·λ) / γ."""
    epsilon_circuit: float
    scale: float
    gamma: float

    @property
    def epsilon_lambda(self) -> float:
        return self.epsilon_circuit * self.scale

    @property
    def epsilon_max(self) -> float:
        return (self.epsilon_circuit + self.epsilon_lambda) / self.gamma


@dataclass(frozen=True)
class PairFold:
    """Fold decision for one coupled pair."""
    pair: tuple[int, int]
    orientation: tuple[int, int]
    gate_error: float
    base_rate: float
    folds: int
    final_rate: float
    anchor: int


@dataclass(frozen=True)
class NoiseAwarePlan:
    threshold: ScaledThreshold
    pairs: tuple[PairFold, ...] = field(default=())

    @property
    def total_folds(self) -> int:
        return sum(p.folds for p in self.pairs)

    def folds(self) -> dict[tuple[int, int], int]:
        return {p.pair: p.folds for p in self.pairs}

    def final_rates(self) -> dict[tuple[int, int], float]:
        return {p.pair: p.final_rate for p in self.pairs}

    def summary(self) -> dict:
        return {
            "epsilon_circuit": self.threshold.epsilon_circuit,
            "epsilon_max": self.threshold.epsilon_max,
            "pairs": {
                f"{p.pair[0]}_{p.pair[1]}": {"folds": p.folds, "final_rate": p.final_rate}
                for p in self.pairs
            },
        }


def _check_scale(scale: float):
    if not scale >= 1:
        raise FoldingError(f"scale factor must be a real number >= 1, got {scale}")


def fold_plan(num_gates: int, scale: float) -> FoldPlan:
    """
    Splits k = round(d(λ - 1)/2) gate folds into n whole folds and s extra ones.
    The partial-fold subset is the first s gate indices.
    """
    _check_scale(scale)
    if num_gates < 1:
        raise FoldingError("cannot fold a circuit without gates")
    k = int(round(num_gates * (scale - 1) / 2))
    n, s = divmod(k, num_gates)
    return FoldPlan(scale=scale, num_gates=num_gates, n=n, s=s, subset=tuple(range(s)))


def fold_global(circuit: Circuit, scale: float) -> Circuit:
    """
    Folds the whole circuit: U (U†U)^n, then the dagger of the last s gates
    followed by those s gates again. The measurement stays last.

    Raises:
        FoldingError: If ``scale`` < 1 or the circuit has no gates.
    """
    body = list(circuit.unitary_gates)
    plan = fold_plan(len(body), scale)

    folded = list(body)
    body_dagger = [g.tagged() for g in inverse(body)]
    for _ in range(plan.n):
        folded += body_dagger + [g.tagged() for g in body]
    if plan.s:
        tail = body[-plan.s:]
        folded += [g.tagged() for g in inverse(tail)] + [g.tagged() for g in tail]

    logger.debug("Global fold λ=%s: n=%d s=%d -> %d gates", scale, plan.n, plan.s, len(folded))
    return circuit.with_gates(folded)


def _fold_locally(circuit: Circuit, plan: FoldPlan) -> Circuit:
    extra = set(plan.subset)
    folded: list[Gate] = []
    for position, gate in enumerate(circuit.unitary_gates):
        folded.append(gate)
        gate_dagger = inverse([gate])[0].tagged()
        for _ in range(plan.n + (position in extra)):
            folded += [gate_dagger, gate.tagged()]
    return circuit.with_gates(folded)


def fold_from_left(circuit: Circuit, scale: float) -> Circuit:
    """Folds every gate n times and the first s gates once more."""
    plan = fold_plan(circuit.depth, scale)
    return _fold_locally(circuit, plan)


def fold_random(circuit: Circuit, scale: float, seed: int) -> Circuit:
    """Folds every gate n times and a seeded random s-subset once more."""
    plan = fold_plan(circuit.depth, scale)
    rng = np.random.default_rng(seed)
    subset = tuple(sorted(int(j) for j in rng.choice(plan.num_gates, size=plan.s, replace=False)))
    plan = FoldPlan(plan.scale, plan.num_gates, plan.n, plan.s, subset)
    return _fold_locally(circuit, plan)


def plan_noise_aware(
    circuit: Circuit,
    scale: float,
    gamma: float,
    model: NoiseModel,
) -> NoiseAwarePlan:
    """
    Decides how many CX·CX pairs each coupled qubit pair receives.

    ε_circuit is the highest off-diagonal cell of the accumulated error
    matrix. For every pair with accumulated error and an existing two-qubit
    gate, folds are added while the running total plus twice the inserted
    gate's error stays within ε_max; the threshold is never exceeded.
    At λ = 1 the plan holds no folds, so the circuit is returned unchanged.

    Raises:
        FoldingError: If ``scale`` < 1 or ``gamma`` <= 0.
    """
    _check_scale(scale)
    if not gamma > 0:
        raise FoldingError(f"gamma must be positive, got {gamma}")

    matrix = accumulate(circuit, model)
    threshold = ScaledThreshold(matrix.max_rate(), scale, gamma)
    limit = threshold.epsilon_max + RATE_TOLERANCE

    last_gate: dict[tuple[int, int], tuple[int, Gate]] = {}
    for position, gate in enumerate(circuit.unitary_gates):
        if gate.is_two_qubit:
            last_gate[tuple(sorted(gate.qubits))] = (position, gate)

    decisions = []
    for pair, base_rate in matrix.pairs():
        if pair not in last_gate:
            continue
        anchor, gate = last_gate[pair]
        gate_error = model.error(*gate.qubits)
        rate, folds = base_rate, 0
        if gate_error > 0 and scale > 1:
            while rate + 2 * gate_error <= limit:
                rate += 2 * gate_error
                folds += 1
        decisions.append(PairFold(pair, gate.qubits, gate_error, base_rate, folds, rate, anchor))

    plan = NoiseAwarePlan(threshold, tuple(decisions))
    logger.info(
        "Noise-aware plan λ=%s γ=%s: ε_circuit=%.6g ε_max=%.6g, %d fold(s)",
        scale, gamma, threshold.epsilon_circuit, threshold.epsilon_max, plan.total_folds,
    )
    return plan


def fold_noise_aware(
    circuit: Circuit,
    scale: float,
    gamma: float,
    model: NoiseModel,
    append_folds: bool = False,
) -> Circuit:
    """
    Inserts the CX pairs chosen by :func:`plan_noise_aware`.

    Each pair's folds go right after the last original two-qubit gate on that
    pair, or at the end of the body (before the measurement) when
    ``append_folds`` is set. Inserted gates copy the orientation of that gate.
    """
    plan = plan_noise_aware(circuit, scale, gamma, model)
    return apply_noise_aware_plan(circuit, plan, append_folds)


def apply_noise_aware_plan(circuit: Circuit, plan: NoiseAwarePlan, append_folds: bool = False) -> Circuit:
    inserts: dict[int, list[Gate]] = {}
    for decision in plan.pairs:
        if not decision.folds:
            continue
        cx = Gate(GateKind.CX, decision.orientation, fold_inserted=True)
        anchor = -1 if append_folds else decision.anchor
        inserts.setdefault(anchor, []).extend([cx, cx] * decision.folds)

    folded: list[Gate] = []
    for position, gate in enumerate(circuit.unitary_gates):
        folded.append(gate)
        folded += inserts.get(position, [])
    folded += inserts.get(-1, [])
    return circuit.with_gates(folded)


def fold(
    circuit: Circuit,
    method: str,
    scale: float,
    seed: int = 0,
    gamma: float = DEFAULT_GAMMA,
    model: NoiseModel | None = None,
    append_folds: bool = False,
) -> Circuit:
    """
    Scales the noise of ``circuit`` by ``scale`` with the named folding method.

    Args:
        circuit: The circuit to fold; noise-aware folding expects physical indices.
        method: One of 'global', 'left', 'random', 'noise-aware'.
        scale: Scale factor λ >= 1.
        seed: Seed for 'random'.
        gamma: Threshold coefficient for 'noise-aware'.
        model: Calibration model, required by 'noise-aware'.
        append_folds: Put noise-aware folds at the end of the circuit.

    Raises:
        FoldingError: On an unknown method or invalid parameters.
    """
    if method == "global":
        return fold_global(circuit, scale)
    if method == "left":
        return fold_from_left(circuit, scale)
    if method == "random":
        return fold_random(circuit, scale, seed)
    if method == "noise-aware":
        if model is None:
            raise FoldingError("noise-aware folding needs a noise model")
        return fold_noise_aware(circuit, scale, gamma, model, append_folds)
    raise FoldingError(f"unknown folding method '{method}'; expected one of {', '.join(FOLD_METHODS)}")


def fold_all(circuit: Circuit, method: str, scales: Sequence[float], **kwargs) -> list[Circuit]:
    """Folded circuits for a list of scale factors."""
    return [fold(circuit, method, scale, **kwargs) for scale in scales]
