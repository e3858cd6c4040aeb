"""Gate-level circuit IR, the line-based text format, and benchmark circuits.

Native gate set: one-qubit Cliffords {X, H, Z, S, T} plus RZ, two-qubit
{CX, SWAP}, and a single terminal MEASURE_ALL. Layer granularity is one
gate, so the depth of a circuit is its count of non-measurement gates.

RZ uses the phase form RZ(theta) = diag(1, e^{i theta}); with that choice
S == RZ(pi/2) and T == RZ(pi/4) exactly, and the daggers of S and T are
written as RZ(-pi/2) and RZ(-pi/4).
"""
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from utils.exceptions import CircuitError, CircuitParseError

_DAGGER_ANGLES = {"S": -math.pi / 2, "T": -math.pi / 4}


class GateKind(str, Enum):
    X = "x"
    H = "h"
    Z = "z"
    S = "s"
    T = "t"
    RZ = "rz"
    CX = "cx"
    SWAP = "swap"
    MEASURE_ALL = "measure"

    @property
    def arity(self) -> int:
        if self is GateKind.MEASURE_ALL:
            return 0
        return 2 if self in (GateKind.CX, GateKind.SWAP) else 1


ONE_QUBIT_KINDS = (GateKind.X, GateKind.H, GateKind.Z, GateKind.S, GateKind.T, GateKind.RZ)
TWO_QUBIT_KINDS = (GateKind.CX, GateKind.SWAP)
SELF_INVERSE_KINDS = (GateKind.X, GateKind.H, GateKind.Z, GateKind.CX, GateKind.SWAP)


@dataclass(frozen=True)
class Gate:
    """One instruction. MEASURE_ALL carries no qubit indices; it acts on all."""
    kind: GateKind
    qubits: tuple[int, ...] = ()
    angle: float | None = None
    fold_inserted: bool = False
    # Set on RZ gates produced by inverting S or T; not part of equality.
    daggered_from: GateKind | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        if len(self.qubits) != self.kind.arity:
            raise CircuitError(
                f"{self.kind.value} acts on {self.kind.arity} qubit(s), got {len(self.qubits)}"
            )
        if len(set(self.qubits)) != len(self.qubits):
            raise CircuitError(f"{self.kind.value} needs distinct qubits, got {self.qubits}")
        if any(q < 0 for q in self.qubits):
            raise CircuitError(f"negative qubit index in {self.qubits}")
        if self.kind is GateKind.RZ:
            if self.angle is None or not math.isfinite(self.angle):
                raise CircuitError(f"rz needs a finite angle, got {self.angle}")
            object.__setattr__(self, "angle", float(self.angle))
        elif self.angle is not None:
            raise CircuitError(f"{self.kind.value} takes no angle")
        if self.daggered_from is not None and self.kind is not GateKind.RZ:
            raise CircuitError(f"{self.kind.value} cannot be the dagger of another gate")

    @property
    def is_two_qubit(self) -> bool:
        return self.kind.arity == 2

    @property
    def is_measurement(self) -> bool:
        return self.kind is GateKind.MEASURE_ALL

    def tagged(self) -> "Gate":
        """Returns a copy marked as inserted by a folding pass."""
        return replace(self, fold_inserted=True)

    def untagged(self) -> "Gate":
        return replace(self, fold_inserted=False)

    def relabeled(self, mapping) -> "Gate":
        return replace(self, qubits=tuple(mapping[q] for q in self.qubits))

    def __str__(self) -> str:
        args = " ".join(str(q) for q in self.qubits)
        if self.kind is GateKind.RZ:
            args = f"{args} {self.angle!r}"
        return f"{self.kind.value} {args}".strip()


@dataclass(frozen=True)
class Circuit:
    """Immutable ordered gate list over ``num_qubits`` qubits."""
    num_qubits: int
    gates: tuple[Gate, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        if self.num_qubits < 1:
            raise CircuitError(f"num_qubits must be positive, got {self.num_qubits}")
        for position, gate in enumerate(self.gates):
            for q in gate.qubits:
                if q >= self.num_qubits:
                    raise CircuitError(
                        f"gate {position} ({gate}) uses qubit {q} on a {self.num_qubits}-qubit circuit"
                    )
            if gate.is_measurement and position != len(self.gates) - 1:
                raise CircuitError("measure must be the final instruction")

    @property
    def is_measured(self) -> bool:
        return bool(self.gates) and self.gates[-1].is_measurement

    @property
    def unitary_gates(self) -> tuple[Gate, ...]:
        return self.gates[:-1] if self.is_measured else self.gates

    @property
    def depth(self) -> int:
        """Number of non-measurement gates (one gate per layer)."""
        return len(self.unitary_gates)

    def count(self, kind: GateKind) -> int:
        return sum(1 for g in self.gates if g.kind is kind)

    def inserted_count(self) -> int:
        return sum(1 for g in self.gates if g.fold_inserted)

    def without_measurement(self) -> "Circuit":
        return Circuit(self.num_qubits, self.unitary_gates)

    def with_gates(self, gates: Iterable[Gate]) -> "Circuit":
        """Same width and terminal measurement, new unitary body."""
        body = tuple(gates)
        if self.is_measured:
            body = body + (self.gates[-1],)
        return Circuit(self.num_qubits, body)

    def untagged(self) -> "Circuit":
        return Circuit(self.num_qubits, tuple(g.untagged() for g in self.gates))

    def touched_qubits(self) -> set[int]:
        return {q for g in self.gates for q in g.qubits}


def parse_circuit(text: str) -> Circuit:
    """
    Parses the line-based circuit format.

    The first instruction must be ``qubits <n>``. Mnemonics are
    case-insensitive, ``#`` starts a comment, and ``measure`` may only be
    the final instruction.

    Raises:
        CircuitParseError: On any syntax or range error, with its line number.
    """
    num_qubits = None
    gates: list[Gate] = []
    measured_at = None

    for line_number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        mnemonic, args = tokens[0].lower(), tokens[1:]

        if num_qubits is None:
            if mnemonic != "qubits" or len(args) != 1:
                raise CircuitParseError("expected 'qubits <n>' header", line_number)
            num_qubits = _parse_int(args[0], line_number)
            if num_qubits < 1:
                raise CircuitParseError("qubit count must be positive", line_number)
            continue

        if measured_at is not None:
            raise CircuitParseError(f"instruction after measure (line {measured_at})", line_number)
        if mnemonic == "qubits":
            raise CircuitParseError("duplicate 'qubits' header", line_number)

        try:
            kind = GateKind(mnemonic)
        except ValueError:
            raise CircuitParseError(f"unknown instruction '{tokens[0]}'", line_number)

        angle = None
        if kind is GateKind.RZ:
            if len(args) != 2:
                raise CircuitParseError("rz expects '<qubit> <theta>'", line_number)
            try:
                angle = float(args[1])
            except ValueError:
                raise CircuitParseError(f"invalid angle '{args[1]}'", line_number)
            if not math.isfinite(angle):
                raise CircuitParseError(f"angle must be finite, got '{args[1]}'", line_number)
            args = args[:1]
        elif len(args) != kind.arity:
            raise CircuitParseError(
                f"{kind.value} expects {kind.arity} qubit argument(s), got {len(args)}", line_number
            )

        qubits = tuple(_parse_int(a, line_number) for a in args)
        for q in qubits:
            if not 0 <= q < num_qubits:
                raise CircuitParseError(f"qubit index {q} out of range for {num_qubits} qubits", line_number)
        try:
            gates.append(Gate(kind, qubits, angle))
        except CircuitError as e:
            raise CircuitParseError(str(e), line_number) from e
        if kind is GateKind.MEASURE_ALL:
            measured_at = line_number

    if num_qubits is None:
        raise CircuitParseError("missing 'qubits <n>' header", 1)
    return Circuit(num_qubits, tuple(gates))


def _parse_int(token: str, line_number: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise CircuitParseError(f"expected an integer, got '{token}'", line_number)


def serialize(circuit: Circuit) -> str:
    """Writes a circuit in the line format. Fold tags are not serialized."""
    lines = [f"qubits {circuit.num_qubits}"]
    lines.extend(str(g) for g in circuit.gates)
    return "\n".join(lines) + "\n"


def inverse(segment: Sequence[Gate]) -> list[Gate]:
    """
    Returns the dagger of a measurement-free gate sequence.

    Gates are reversed; X, H, Z, CX and SWAP are their own inverses,
    S -> RZ(-pi/2), T -> RZ(-pi/4) and RZ(theta) -> RZ(-theta). Only an RZ
    that was itself produced from S or T inverts back to that mnemonic; a
    user-written RZ stays an RZ.

    Raises:
        CircuitError: If the segment contains a measurement.
    """
    result = []
    for gate in reversed(segment):
        if gate.is_measurement:
            raise CircuitError("cannot invert a segment containing measure")
        result.append(_dagger(gate))
    return result


def _dagger(gate: Gate) -> Gate:
    if gate.kind in SELF_INVERSE_KINDS:
        return gate
    if gate.kind in (GateKind.S, GateKind.T):
        return replace(gate, kind=GateKind.RZ, angle=_DAGGER_ANGLES[gate.kind.name], daggered_from=gate.kind)
    if gate.daggered_from is not None:
        return replace(gate, kind=gate.daggered_from, angle=None, daggered_from=None)
    return replace(gate, angle=-gate.angle)


def cnot_chain(n: int) -> Circuit:
    """X on qubit 0, then CX(0,1) ... CX(n-2,n-1); the ideal readout is all ones."""
    if n < 2:
        raise CircuitError(f"cnot chain needs at least 2 qubits, got {n}")
    gates = [Gate(GateKind.X, (0,))]
    gates.extend(Gate(GateKind.CX, (i, i + 1)) for i in range(n - 1))
    gates.append(Gate(GateKind.MEASURE_ALL))
    return Circuit(n, tuple(gates))


def bernstein_vazirani(secret: str) -> Circuit:
    """
    Bernstein-Vazirani circuit for ``secret`` on len(secret) data qubits
    plus one ancilla (the last qubit). The ideal data readout equals the secret.
    """
    if not secret:
        raise CircuitError("secret must be a non-empty bitstring")
    if any(c not in "01" for c in secret):
        raise CircuitError(f"secret must contain only 0/1, got '{secret}'")
    n = len(secret)
    ancilla = n
    gates = [Gate(GateKind.H, (i,)) for i in range(n)]
    gates += [Gate(GateKind.X, (ancilla,)), Gate(GateKind.H, (ancilla,))]
    gates += [Gate(GateKind.CX, (i, ancilla)) for i, bit in enumerate(secret) if bit == "1"]
    gates += [Gate(GateKind.H, (i,)) for i in range(n)]
    gates.append(Gate(GateKind.MEASURE_ALL))
    return Circuit(n + 1, tuple(gates))


def random_circuit(
    num_qubits: int,
    num_gates: int,
    seed: int,
    two_qubit_fraction: float = 0.4,
    measure: bool = False,
) -> Circuit:
    """Seeded random circuit over the full native gate set."""
    rng = np.random.default_rng(seed)
    gates = []
    for _ in range(num_gates):
        if num_qubits >= 2 and rng.random() < two_qubit_fraction:
            kind = TWO_QUBIT_KINDS[rng.integers(len(TWO_QUBIT_KINDS))]
            a, b = rng.choice(num_qubits, size=2, replace=False)
            gates.append(Gate(kind, (int(a), int(b))))
        else:
            kind = ONE_QUBIT_KINDS[rng.integers(len(ONE_QUBIT_KINDS))]
            q = int(rng.integers(num_qubits))
            angle = float(rng.uniform(-math.pi, math.pi)) if kind is GateKind.RZ else None
            gates.append(Gate(kind, (q,), angle))
    if measure:
        gates.append(Gate(GateKind.MEASURE_ALL))
    return Circuit(num_qubits, tuple(gates))


def compact(circuit: Circuit, keep: Iterable[int] = ()) -> tuple[Circuit, tuple[int, ...]]:
    """
    Relabels a physical circuit onto the qubits it uses.

    Args:
        circuit: Circuit over device-wide physical indices.
        keep: Extra physical qubits to retain even if no gate touches them.

    Returns:
        The relabeled circuit and the sorted physical qubits; compact index
        ``j`` stands for physical qubit ``active[j]``.
    """
    active = tuple(sorted(circuit.touched_qubits() | set(keep)))
    if not active:
        active = (0,)
    mapping = {p: j for j, p in enumerate(active)}
    gates = tuple(g.relabeled(mapping) for g in circuit.gates)
    return Circuit(len(active), gates), active
