"""Calibration-derived noise model with coupling topology."""
import json
import logging
import math
import pathlib
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import networkx as nx

from circuit_ir import Gate, GateKind
from utils.exceptions import CalibrationError, NoCouplingError
from utils.loaders import load_calibration

logger = logging.getLogger(__name__)

# A SWAP is priced as its three-CX decomposition.
SWAP_CX_COUNT = 3

_STEM_WITH_DATE = re.compile(r"^(?P<backend>.+?)_(?P<date>\d{4}-\d{2}-\d{2})$")


@dataclass(frozen=True)
class NoiseModel:
    """
    Per-gate error probabilities and readout confusion for a device.

    ``two_qubit_error`` is keyed by directed pair (control, target); lookups
    through :meth:`error` fall back to the reverse direction, so consumers
    always see a symmetric coupling map. ``properties`` keeps T1/T2 and the
    other informational columns; no channel uses them.
    """
    num_qubits: int
    two_qubit_error: Mapping[tuple[int, int], float] = field(default_factory=dict)
    one_qubit_error: Mapping[int, float] = field(default_factory=dict)
    readout: Mapping[int, tuple[float, float]] = field(default_factory=dict)
    backend: str = ""
    date: str = ""
    properties: Mapping[int, Mapping[str, float]] = field(default_factory=dict)

    def __post_init__(self):
        if self.num_qubits < 0:
            raise CalibrationError(f"num_qubits must be non-negative, got {self.num_qubits}")
        for (i, k), p in self.two_qubit_error.items():
            self._check_qubit(i)
            self._check_qubit(k)
            if i == k:
                raise CalibrationError(f"two-qubit error on a single qubit: {i}_{k}")
            _check_probability(p, f"two_qubit_error {i}_{k}")
        for q, p in self.one_qubit_error.items():
            self._check_qubit(q)
            _check_probability(p, f"one_qubit_error {q}")
        for q, (p01, p10) in self.readout.items():
            self._check_qubit(q)
            _check_probability(p01, f"readout {q} meas0|prep1")
            _check_probability(p10, f"readout {q} meas1|prep0")

    def _check_qubit(self, q: int):
        if not 0 <= q < self.num_qubits:
            raise CalibrationError(f"qubit {q} outside a {self.num_qubits}-qubit model")

    # --- Queries ---
    def error(self, i: int, k: int) -> float:
        """CX error for control ``i`` and target ``k``, falling back to (k, i)."""
        if (i, k) in self.two_qubit_error:
            return self.two_qubit_error[(i, k)]
        if (k, i) in self.two_qubit_error:
            return self.two_qubit_error[(k, i)]
        raise NoCouplingError(i, k)

    def is_coupled(self, i: int, k: int) -> bool:
        return (i, k) in self.two_qubit_error or (k, i) in self.two_qubit_error

    def edges(self) -> set[frozenset[int]]:
        """One unordered pair per coupled edge."""
        return {frozenset(pair) for pair in self.two_qubit_error}

    def one_qubit(self, q: int) -> float:
        return self.one_qubit_error.get(q, 0.0)

    def readout_error(self, q: int) -> tuple[float, float]:
        """(P(meas 0 | prep 1), P(meas 1 | prep 0)) for qubit ``q``."""
        return tuple(self.readout.get(q, (0.0, 0.0)))

    def gate_error(self, gate: Gate) -> float:
        """Depolarizing strength charged to ``gate``; SWAP is priced as 3 CX."""
        if gate.kind is GateKind.MEASURE_ALL:
            return 0.0
        if gate.kind is GateKind.CX:
            return self.error(*gate.qubits)
        if gate.kind is GateKind.SWAP:
            return SWAP_CX_COUNT * self.error(*gate.qubits)
        return self.one_qubit(gate.qubits[0])

    def graph(self) -> nx.Graph:
        """Coupling graph with symmetric ``error`` edge weights."""
        graph = nx.Graph()
        graph.add_nodes_from(range(self.num_qubits))
        for edge in sorted(tuple(sorted(e)) for e in self.edges()):
            graph.add_edge(*edge, error=self.error(*edge))
        return graph

    # --- Derived models ---
    def subset(self, qubits: Iterable[int]) -> "NoiseModel":
        """Restricts the model to ``qubits`` and relabels them 0..len-1 in order."""
        qubits = list(qubits)
        index = {p: j for j, p in enumerate(qubits)}
        return NoiseModel(
            num_qubits=len(qubits),
            two_qubit_error={
                (index[i], index[k]): p for (i, k), p in self.two_qubit_error.items()
                if i in index and k in index
            },
            one_qubit_error={index[q]: p for q, p in self.one_qubit_error.items() if q in index},
            readout={index[q]: r for q, r in self.readout.items() if q in index},
            backend=self.backend,
            date=self.date,
            properties={index[q]: v for q, v in self.properties.items() if q in index},
        )

    def without_readout(self) -> "NoiseModel":
        return NoiseModel(
            num_qubits=self.num_qubits,
            two_qubit_error=dict(self.two_qubit_error),
            one_qubit_error=dict(self.one_qubit_error),
            backend=self.backend,
            date=self.date,
            properties=dict(self.properties),
        )

    @classmethod
    def uniform(
        cls,
        num_qubits: int,
        edges: Iterable[tuple[int, int]],
        cx_error: float,
        one_qubit_error: float = 0.0,
        readout: tuple[float, float] = (0.0, 0.0),
        backend: str = "uniform",
    ) -> "NoiseModel":
        """Synthetic model with the same error on every edge, both directions stored."""
        two_qubit = {}
        for i, k in edges:
            two_qubit[(i, k)] = cx_error
            two_qubit[(k, i)] = cx_error
        return cls(
            num_qubits=num_qubits,
            two_qubit_error=two_qubit,
            one_qubit_error={q: one_qubit_error for q in range(num_qubits)},
            readout={q: tuple(readout) for q in range(num_qubits)},
            backend=backend,
        )

    @classmethod
    def line(cls, num_qubits: int, cx_error: float, **kwargs) -> "NoiseModel":
        return cls.uniform(num_qubits, [(q, q + 1) for q in range(num_qubits - 1)], cx_error, **kwargs)

    # --- Serialization ---
    def to_dict(self) -> dict:
        document = {
            "backend": self.backend,
            "date": self.date,
            "num_qubits": self.num_qubits,
            "one_qubit_error": {str(q): p for q, p in sorted(self.one_qubit_error.items())},
            "readout": {str(q): list(r) for q, r in sorted(self.readout.items())},
            "two_qubit_error": {f"{i}_{k}": p for (i, k), p in sorted(self.two_qubit_error.items())},
        }
        if self.properties:
            document["properties"] = {str(q): dict(v) for q, v in sorted(self.properties.items())}
        return document

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, document: Mapping) -> "NoiseModel":
        """Builds a model from the JSON-schema dictionary."""
        try:
            two_qubit = {}
            for key, p in document.get("two_qubit_error", {}).items():
                i, k = _parse_pair(key)
                if (i, k) in two_qubit and two_qubit[(i, k)] != float(p):
                    raise CalibrationError(f"conflicting values for pair {key}")
                two_qubit[(i, k)] = float(p)
            readout = {}
            for q, values in document.get("readout", {}).items():
                if len(values) != 2:
                    raise CalibrationError(f"readout for qubit {q} needs [p01, p10]")
                readout[int(q)] = (float(values[0]), float(values[1]))
            model = cls(
                num_qubits=int(document["num_qubits"]),
                two_qubit_error=two_qubit,
                one_qubit_error={int(q): float(p) for q, p in document.get("one_qubit_error", {}).items()},
                readout=readout,
                backend=str(document.get("backend", "")),
                date=str(document.get("date", "")),
                properties={
                    int(q): {name: float(v) for name, v in values.items()}
                    for q, values in document.get("properties", {}).items()
                },
            )
        except CalibrationError:
            raise
        except (KeyError, TypeError, ValueError) as e:
            raise CalibrationError(f"malformed calibration document: {e}") from e
        return model


def _parse_pair(key: str) -> tuple[int, int]:
    parts = str(key).split("_")
    if len(parts) != 2:
        raise CalibrationError(f"pair key must look like 'i_j', got '{key}'")
    try:
        return int(parts[0]), int(parts[1])
    except ValueError:
        raise CalibrationError(f"pair key must look like 'i_j', got '{key}'")


def _check_probability(p: float, what: str):
    if not (isinstance(p, (int, float)) and math.isfinite(p) and 0.0 <= p <= 1.0):
        raise CalibrationError(f"{what} must be a probability in [0, 1], got {p}")


def load_noise_model(
    source: str | pathlib.Path | bytes,
    ext: str | None = None,
    name: str | None = None,
) -> NoiseModel:
    """
    Loads a noise model from a JSON or per-qubit CSV calibration document.

    Args:
        source: A file path, or the raw document bytes.
        ext: Format hint ('csv' or 'json'); defaults to the file suffix.
        name: File name of uploaded bytes, used for the backend and date.

    For CSV files named ``<backend>_<YYYY-MM-DD>.csv`` the backend name and
    capture date are taken from the file name.
    """
    if isinstance(source, bytes):
        raw = source
        path = pathlib.Path(name or "")
    else:
        path = pathlib.Path(source)
        try:
            raw = path.read_bytes()
        except OSError as e:
            raise CalibrationError(f"cannot read calibration file {path}: {e}") from e
    ext = ext or path.suffix
    match = _STEM_WITH_DATE.match(path.stem)
    backend, date = (match["backend"], match["date"]) if match else (path.stem, "")

    document = load_calibration(raw, ext)
    if not document.get("backend"):
        document["backend"] = backend
    if not document.get("date"):
        document["date"] = date
    model = NoiseModel.from_dict(document)
    logger.info(
        "Loaded noise model '%s' (%s): %d qubits, %d edges",
        model.backend, model.date or "undated", model.num_qubits, len(model.edges()),
    )
    return model


def dump_noise_model(model: NoiseModel, path: str | pathlib.Path):
    pathlib.Path(path).write_text(model.to_json(), encoding="utf-8")
