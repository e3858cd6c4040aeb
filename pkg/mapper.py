"""Noise-adaptive qubit layout and SWAP routing onto a coupling graph."""
import logging
from dataclasses import dataclass, replace
from functools import cached_property

import networkx as nx

from circuit_ir import Circuit, Gate, GateKind
from noise_model import NoiseModel
from utils.exceptions import MappingError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Layout:
    """Injective logical -> physical assignment; index = logical qubit."""
    logical_to_physical: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "logical_to_physical", tuple(int(p) for p in self.logical_to_physical))
        if len(set(self.logical_to_physical)) != len(self.logical_to_physical):
            raise MappingError(f"layout is not injective: {self.logical_to_physical}")

    def __len__(self) -> int:
        return len(self.logical_to_physical)

    @cached_property
    def physical_to_logical(self) -> dict[int, int]:
        return {p: q for q, p in enumerate(self.logical_to_physical)}

    def physical(self, logical: int) -> int:
        return self.logical_to_physical[logical]

    def logical(self, physical: int) -> int | None:
        return self.physical_to_logical.get(physical)

    def to_pairs(self) -> list[tuple[int, int]]:
        """``logical -> physical`` pairs for result metadata."""
        return list(enumerate(self.logical_to_physical))

    @classmethod
    def identity(cls, num_qubits: int) -> "Layout":
        return cls(tuple(range(num_qubits)))


@dataclass(frozen=True)
class RoutedCircuit:
    """A topology-conformant physical circuit plus the layouts around it."""
    circuit: Circuit
    initial_layout: Layout
    final_layout: Layout
    swap_count: int


class PathTable:
    """
    Minimum-error shortest paths on a device: among the hop-shortest paths
    between two physical qubits, the one with the smallest summed CX error
    (ties broken by the lexicographically smallest path).
    """

    def __init__(self, model: NoiseModel):
        self.model = model
        self.graph = model.graph()
        self._cache: dict[tuple[int, int], list[int]] = {}

    def path(self, source: int, target: int) -> list[int]:
        key = (source, target)
        if key not in self._cache:
            try:
                candidates = list(nx.all_shortest_paths(self.graph, source, target))
            except nx.NetworkXNoPath:
                raise MappingError(f"no path between physical qubits {source} and {target}")
            self._cache[key] = min(candidates, key=lambda p: (self.path_error(p), p))
        return self._cache[key]

    def path_error(self, path: list[int]) -> float:
        return sum(self.graph[a][b]["error"] for a, b in zip(path, path[1:]))

    def cost(self, source: int, target: int) -> float:
        """Path error times path length; infinite when disconnected."""
        try:
            path = self.path(source, target)
        except MappingError:
            return float("inf")
        return self.path_error(path) * (len(path) - 1)


def interaction_graph(circuit: Circuit) -> nx.Graph:
    """Logical qubits as nodes, edges weighted by two-qubit gate counts."""
    graph = nx.Graph()
    graph.add_nodes_from(range(circuit.num_qubits))
    for gate in circuit.unitary_gates:
        if gate.is_two_qubit:
            a, b = gate.qubits
            weight = graph.get_edge_data(a, b, {"weight": 0})["weight"]
            graph.add_edge(a, b, weight=weight + 1)
    return graph


def noise_adaptive_layout(circuit: Circuit, model: NoiseModel) -> Layout:
    """
    Greedy, deterministic noise-adaptive layout.

    1. The most-interacting logical pair is placed on the coupled edge with
       the lowest CX error; the busier logical qubit of the pair takes the
       endpoint with more neighbours.
    2. The unplaced logical qubit with the most interactions to placed ones
       goes to the free physical neighbour of the placed set that minimizes
       the summed (path error x path length) to its placed partners.
    Ties are broken by the lowest index. Circuits without two-qubit gates
    are placed on the qubits with the lowest one-qubit error.

    Raises:
        MappingError: If the circuit is wider than the device.
    """
    n = circuit.num_qubits
    if n > model.num_qubits:
        raise MappingError(f"circuit needs {n} qubits, device has {model.num_qubits}")

    interactions = interaction_graph(circuit)
    if interactions.number_of_edges() == 0:
        ranked = sorted(range(model.num_qubits), key=lambda p: (model.one_qubit(p), p))
        return Layout(tuple(ranked[:n]))

    edges = sorted(tuple(sorted(e)) for e in model.edges())
    if not edges:
        raise MappingError("device has no coupled qubits")

    paths = PathTable(model)
    strength = dict(interactions.degree(weight="weight"))

    seed_edge = min(edges, key=lambda e: (model.error(*e), e))
    busiest = min(
        (tuple(sorted(e)) for e in interactions.edges),
        key=lambda e: (-interactions[e[0]][e[1]]["weight"], e),
    )
    logical_pair = sorted(busiest, key=lambda q: (-strength[q], q))
    physical_pair = sorted(seed_edge, key=lambda p: (-paths.graph.degree(p), p))
    placement = dict(zip(logical_pair, physical_pair))

    while len(placement) < n:
        def pull(q: int) -> int:
            return sum(d["weight"] for r, d in interactions[q].items() if r in placement)

        unplaced = [q for q in range(n) if q not in placement]
        logical = min(unplaced, key=lambda q: (-pull(q), -strength[q], q))
        partners = [placement[r] for r in interactions[logical] if r in placement]

        used = set(placement.values())
        candidates = sorted({nb for p in used for nb in paths.graph.neighbors(p)} - used)
        if not candidates:
            candidates = sorted(set(range(model.num_qubits)) - used)
        placement[logical] = min(
            candidates, key=lambda p: (sum(paths.cost(p, s) for s in partners), p)
        )

    layout = Layout(tuple(placement[q] for q in range(n)))
    logger.info("Noise-adaptive layout: %s", layout.to_pairs())
    return layout


def route(circuit: Circuit, layout: Layout, model: NoiseModel) -> RoutedCircuit:
    """
    Rewrites a logical circuit onto physical qubits, inserting SWAPs so that
    every two-qubit gate acts on a coupled pair.

    An uncoupled gate moves its first qubit along the minimum-error shortest
    path until it neighbours the second. No lookahead is performed. The
    returned final layout records where each logical qubit ends up, which
    is the permutation to undo at readout.

    Raises:
        MappingError: If the layout does not fit or the topology is disconnected.
    """
    if len(layout) != circuit.num_qubits:
        raise MappingError(f"layout covers {len(layout)} qubits, circuit has {circuit.num_qubits}")
    if any(p >= model.num_qubits for p in layout.logical_to_physical):
        raise MappingError(f"layout {layout.to_pairs()} exceeds a {model.num_qubits}-qubit device")

    paths = PathTable(model)
    l2p = list(layout.logical_to_physical)
    p2l = {p: q for q, p in enumerate(l2p)}
    routed: list[Gate] = []
    swap_count = 0

    for gate in circuit.gates:
        if gate.is_measurement:
            routed.append(gate)
            continue
        if not gate.is_two_qubit:
            routed.append(replace(gate, qubits=(l2p[gate.qubits[0]],)))
            continue

        a, b = gate.qubits
        pa, pb = l2p[a], l2p[b]
        if not model.is_coupled(pa, pb):
            path = paths.path(pa, pb)
            for here, there in zip(path[:-2], path[1:-1]):
                routed.append(Gate(GateKind.SWAP, (here, there)))
                swap_count += 1
                moved, displaced = p2l.pop(here), p2l.pop(there, None)
                l2p[moved], p2l[there] = there, moved
                if displaced is not None:
                    l2p[displaced], p2l[here] = here, displaced
            pa = l2p[a]
        routed.append(replace(gate, qubits=(pa, pb)))

    final_layout = Layout(tuple(l2p))
    logger.info("Routing inserted %d SWAP(s); final layout %s", swap_count, final_layout.to_pairs())
    return RoutedCircuit(
        circuit=Circuit(model.num_qubits, tuple(routed)),
        initial_layout=layout,
        final_layout=final_layout,
        swap_count=swap_count,
    )


def readout_map(final_layout: Layout, active: tuple[int, ...]) -> tuple[int, ...]:
    """Measured bit position (in a compacted circuit) of each logical qubit."""
    index = {p: j for j, p in enumerate(active)}
    try:
        return tuple(index[final_layout.physical(q)] for q in range(len(final_layout)))
    except KeyError as e:
        raise MappingError(f"physical qubit {e.args[0]} is not among the active qubits") from e
