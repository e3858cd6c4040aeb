"""Parsing of textual options: circuit sources, scale lists and qubit ranges."""
import pathlib
import re
from dataclasses import dataclass
from typing import List

from circuit_ir import Circuit, bernstein_vazirani, cnot_chain, parse_circuit
from .exceptions import CircuitError

CIRCUIT_FAMILIES = ("cnot-chain", "bv")

_RANGE = re.compile(r"^\s*(\d+)\s*\.\.\s*(\d+)\s*$")


@dataclass(frozen=True)
class CircuitSource:
    """A circuit plus the ideal readout it is scored against, when known."""
    name: str
    circuit: Circuit
    target: str | None = None
    target_qubits: tuple[int, ...] | None = None


def parse_circuit_source(source: str) -> CircuitSource:
    """
    Resolves ``cnot-chain:N``, ``bv:SECRET`` or a path to a circuit file.

    Raises:
        CircuitError: If the generator arguments are invalid or the file is
            missing or malformed.
    """
    family, _, argument = source.partition(":")
    if family == "cnot-chain" and argument:
        try:
            size = int(argument)
        except ValueError:
            raise CircuitError(f"cnot-chain size must be an integer, got '{argument}'")
        return CircuitSource(source, cnot_chain(size), target="1" * size)
    if family == "bv" and argument:
        circuit = bernstein_vazirani(argument)
        return CircuitSource(source, circuit, target=argument, target_qubits=tuple(range(len(argument))))

    path = pathlib.Path(source)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise CircuitError(f"cannot read circuit file '{source}': {e}") from e
    return CircuitSource(path.name, parse_circuit(text))


def family_source(family: str, num_qubits: int) -> str:
    """Source string of a benchmark family at a total qubit count."""
    if family == "cnot-chain":
        return f"cnot-chain:{num_qubits}"
    if family == "bv":
        if num_qubits < 2:
            raise CircuitError("bv needs at least 2 qubits (one data qubit plus the ancilla)")
        return f"bv:{'1' * (num_qubits - 1)}"
    raise CircuitError(f"unknown circuit family '{family}'; expected one of {', '.join(CIRCUIT_FAMILIES)}")


def parse_scales(text: str) -> List[float]:
    """'1,1.5,2' -> [1.0, 1.5, 2.0]."""
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ValueError(f"scale factors must be comma-separated numbers, got '{text}'")


def parse_qubit_range(text: str) -> List[int]:
    """'2..8' -> [2, 3, ..., 8]; a comma list such as '2,4,6' is accepted as well."""
    match = _RANGE.match(text)
    if match:
        low, high = int(match.group(1)), int(match.group(2))
        if low > high:
            raise ValueError(f"empty qubit range '{text}'")
        return list(range(low, high + 1))
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ValueError(f"qubit range must look like '2..8', got '{text}'")


def parse_methods(text: str) -> List[str]:
    return [part.strip() for part in text.split(",") if part.strip()]
