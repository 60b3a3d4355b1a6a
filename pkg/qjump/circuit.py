from __future__ import annotations

import functools
import math
from typing import Iterable, Sequence

import attrs
from bidict import bidict
from pyrsistent import PMap, PVector, pmap, pvector
from sortedcontainers import SortedList

from qjump.core import (
    GateDef,
    StateVector,
    apply_gate,
    format_angle,
    gate_from_label,
    is_parametrized,
    parse_angle,
)


"""This module provides circuits as directed acyclic graphs of gate nodes.

Every node carries a gate and the ordered qubits (qargs) it acts on. Each qubit
is a wire threading, in order, the nodes that touch it; consecutive nodes on a
wire are joined by an edge. Nodes are numbered by insertion, and every
enumeration of the graph is the topological order that breaks ties by that
number, so "node index i" means the same node across identical builds.

Error injection follows node substitution: the selected node is replaced by a
small graph made of the node itself followed by one copy of the error gate on
each of its wires.
"""


# The coherent rotation angles of the error grid, by their exact names
GRID_ANGLES = bidict(
    {
        "pi/2": math.pi / 2,
        "pi/4": math.pi / 4,
        "pi/8": math.pi / 8,
        "pi/16": math.pi / 16,
        "pi/32": math.pi / 32,
    }
)
# "pauli" draws one of x, y, z uniformly for every run
ERROR_KINDS = ("pauli", "x", "y", "z", "rz")
UNIFORM_PLACEMENT = "uniform-random"


@attrs.frozen
class OpNode:
    """A gate applied to an ordered tuple of qubits."""

    node_id: int
    gate: GateDef
    qargs: tuple[int, ...]

    def __str__(self):
        words = [self.gate.label]
        if self.gate.parameter is not None:
            words.append(format_angle(self.gate.parameter))
        words.extend(str(q) for q in self.qargs)
        return " ".join(words)


def _check_angle(instance, attribute, value):
    if (value is None) != (instance.kind != "rz"):
        raise ValueError("An angle is given iff the error kind is rz.")
    if (
        value is not None
        and not instance.free_angle
        and value not in GRID_ANGLES.inverse
    ):
        raise ValueError(f"Angle not in the error grid: {format_angle(value)}")


def _check_placement(instance, attribute, value):
    if value == UNIFORM_PLACEMENT:
        return
    if not isinstance(value, tuple) or len(value) != instance.count:
        raise ValueError(f"Placement must list {instance.count} node indices: {value}")


@attrs.frozen
class ErrorSpec:
    """The logical errors injected into every run of an experiment.

    A count of 0 describes the noiseless control.
    """

    kind: str = attrs.field(validator=attrs.validators.in_(ERROR_KINDS))
    count: int = attrs.field(default=1, validator=attrs.validators.in_((0, 1, 2)))
    angle: float | None = attrs.field(default=None, validator=_check_angle)
    placement: str | tuple[int, ...] = attrs.field(
        default=UNIFORM_PLACEMENT, validator=_check_placement
    )
    free_angle: bool = False

    @property
    def angle_label(self) -> str:
        """The exact name of the angle, or "" for Pauli errors."""
        return "" if self.angle is None else format_angle(self.angle)


class CircuitDag:
    """An immutable circuit DAG over a fixed number of qubits."""

    num_qubits: int
    # node_id -> node
    _nodes: PMap
    # qubit -> node ids in wire order
    _wires: PVector
    _next_id: int

    def __init__(
        self,
        num_qubits: int,
        operations: Iterable[tuple[GateDef, Sequence[int]]] = (),
    ):
        """Initialize this circuit from gates applied in the given order.

        Args:
            num_qubits: Register size.
            operations: (gate, qargs) pairs, each appended after the previous.

        Raises:
            ValueError: If num_qubits is negative or an operation is invalid.
        """
        if num_qubits < 0:
            raise ValueError(f"Invalid number of qubits: {num_qubits}")
        nodes = {}
        wires = [[] for _ in range(num_qubits)]
        for node_id, (gate, qargs) in enumerate(operations):
            qargs = _check_qargs(num_qubits, gate, qargs)
            nodes[node_id] = OpNode(node_id, gate, qargs)
            for q in qargs:
                wires[q].append(node_id)
        self.num_qubits = num_qubits
        self._nodes = pmap(nodes)
        self._wires = pvector(pvector(wire) for wire in wires)
        self._next_id = len(nodes)

    @classmethod
    def from_gates(
        cls, num_qubits: int, operations: Iterable[tuple[GateDef, Sequence[int]]]
    ) -> CircuitDag:
        return cls(num_qubits, operations)

    @classmethod
    def _from_parts(
        cls, num_qubits: int, nodes: PMap, wires: PVector, next_id: int
    ) -> CircuitDag:
        dag = cls.__new__(cls)
        dag.num_qubits = num_qubits
        dag._nodes = nodes
        dag._wires = wires
        dag._next_id = next_id
        return dag

    def __repr__(self):
        return "CircuitDag(num_qubits=%r,nodes=%r)" % (self.num_qubits, len(self))

    def __str__(self):
        return dump_circuit(self)

    def __eq__(self, other: CircuitDag):
        return (
            isinstance(other, CircuitDag)
            and self.num_qubits == other.num_qubits
            and [(n.gate, n.qargs) for n in self._order]
            == [(n.gate, n.qargs) for n in other._order]
        )

    def __len__(self):
        return len(self._nodes)

    def append(self, gate: GateDef, qargs: Sequence[int]) -> CircuitDag:
        """Return a new circuit with the gate appended after every node on its wires.

        Raises:
            ValueError: If the qargs are invalid for the gate.
        """
        qargs = _check_qargs(self.num_qubits, gate, qargs)
        node = OpNode(self._next_id, gate, qargs)
        wires = self._wires
        for q in qargs:
            wires = wires.set(q, wires[q].append(node.node_id))
        return CircuitDag._from_parts(
            self.num_qubits,
            self._nodes.set(node.node_id, node),
            wires,
            self._next_id + 1,
        )

    def wire(self, qubit: int) -> list[OpNode]:
        """Return the nodes touching the given qubit, in wire order."""
        return [self._nodes[node_id] for node_id in self._wires[qubit]]

    @functools.cached_property
    def _order(self) -> tuple[OpNode, ...]:
        successors = {node_id: set() for node_id in self._nodes}
        indegree = dict.fromkeys(self._nodes, 0)
        for wire in self._wires:
            for a, b in zip(wire, wire[1:]):
                if b not in successors[a]:
                    successors[a].add(b)
                    indegree[b] += 1

        ready = SortedList(node_id for node_id, d in indegree.items() if d == 0)
        order = []
        while ready:
            node_id = ready.pop(0)
            order.append(self._nodes[node_id])
            for succ in successors[node_id]:
                indegree[succ] -= 1
                if indegree[succ] == 0:
                    ready.add(succ)
        if len(order) != len(self._nodes):
            raise ValueError("Circuit graph contains a cycle.")
        return tuple(order)


def _check_qargs(
    num_qubits: int, gate: GateDef, qargs: Sequence[int]
) -> tuple[int, ...]:
    qargs = tuple(int(q) for q in qargs)
    if len(qargs) != gate.arity:
        raise ValueError(
            f"Gate {gate.label} acts on {gate.arity} qubits, {len(qargs)} given."
        )
    if len(set(qargs)) != len(qargs):
        raise ValueError(f"Repeated qubit in {qargs}")
    if any(q < 0 or q >= num_qubits for q in qargs):
        raise ValueError(f"Qubit out of range for {num_qubits} qubits: {qargs}")
    return qargs


class CircuitBuilder:
    """Accumulates gates in program order and builds a CircuitDag."""

    def __init__(self, num_qubits: int):
        self.num_qubits = num_qubits
        self._operations = []

    def add(self, gate: GateDef, *qargs: int) -> CircuitBuilder:
        self._operations.append((gate, qargs))
        return self

    def layer(self, gate: GateDef, qubits: Iterable[int]) -> CircuitBuilder:
        """Add a single-qubit gate on each of the given qubits."""
        for q in qubits:
            self.add(gate, q)
        return self

    def build(self) -> CircuitDag:
        return CircuitDag(self.num_qubits, self._operations)


# ===== Operations =====


def op_nodes(dag: CircuitDag) -> list[OpNode]:
    """Return the nodes of the circuit in topological order, ties broken by
    insertion order.
    """
    return list(dag._order)


def injectable_indices(dag: CircuitDag) -> list[int]:
    """Return the op_nodes indices of the nodes an error may follow, i.e. every
    node except directives such as barriers.
    """
    return [i for i, node in enumerate(dag._order) if not node.gate.directive]


def inject_error(dag: CircuitDag, error: GateDef, index: int) -> CircuitDag:
    """Return a new circuit in which one copy of the error gate follows the node
    op_nodes(dag)[index] on every wire that node touches.

    Nodes before the selected one keep their indices, so several errors can be
    injected by working from the highest index down.

    Raises:
        ValueError: If the index is out of range, names a directive, or the
            error gate is not a single-qubit gate.
    """
    order = dag._order
    if not 0 <= index < len(order):
        raise ValueError(f"Node index out of range: {index} (circuit has {len(order)})")
    if error.arity != 1:
        raise ValueError(f"Error gate must act on one qubit: {error.label}")
    target = order[index]
    if target.gate.directive:
        raise ValueError(f"Cannot inject an error after a directive: {target}")

    nodes, wires, next_id = dag._nodes, dag._wires, dag._next_id
    for q in target.qargs:
        node = OpNode(next_id, error, (q,))
        nodes = nodes.set(next_id, node)
        wire = wires[q]
        position = wire.index(target.node_id) + 1
        wires = wires.set(
            q, wire[:position] + pvector([next_id]) + wire[position:]
        )
        next_id += 1
    return CircuitDag._from_parts(dag.num_qubits, nodes, wires, next_id)


def depth(dag: CircuitDag) -> int:
    """Return the number of op nodes on the longest wire-dependency path.
    Directives do not add to the depth.
    """
    levels = [0] * dag.num_qubits
    for node in dag._order:
        level = max(levels[q] for q in node.qargs)
        if not node.gate.directive:
            level += 1
        for q in node.qargs:
            levels[q] = level
    return max(levels, default=0)


def execute(dag: CircuitDag, initial: StateVector) -> StateVector:
    """Return the state obtained by applying the circuit's gates to initial in
    topological order.

    Raises:
        ValueError: If the circuit and state have different numbers of qubits.
    """
    if dag.num_qubits != initial.num_qubits:
        raise ValueError(
            f"Dimension mismatch: circuit on {dag.num_qubits} qubits, "
            f"state on {initial.num_qubits}."
        )
    state = initial
    for node in dag._order:
        state = apply_gate(state, node.gate, node.qargs)
    return state


# ===== Text Format =====


def dump_circuit(dag: CircuitDag) -> str:
    """Return the circuit as text: a "# qubits N" line, then one node per line
    as "<gate> <angle?> <qubits...>", in op_nodes order.
    """
    lines = [f"# qubits {dag.num_qubits}"]
    lines.extend(str(node) for node in dag._order)
    return "\n".join(lines) + "\n"


def string_to_circuit(string: str) -> CircuitDag:
    """Given the text produced by dump_circuit, return the corresponding circuit.

    Raises:
        ValueError: If the text cannot be parsed into a circuit.
    """
    num_qubits = None
    operations = []
    for line_number, line in enumerate(string.splitlines(), start=1):
        symbols = line.split()
        if not symbols:
            continue
        if symbols[0] == "#":
            if len(symbols) == 3 and symbols[1] == "qubits":
                num_qubits = int(symbols[2])
            continue
        label, rest = symbols[0], symbols[1:]
        parameter = None
        if is_parametrized(label):
            if not rest:
                raise ValueError(f"Line {line_number}: missing angle for {label}")
            parameter, rest = parse_angle(rest[0]), rest[1:]
        try:
            qargs = [int(q) for q in rest]
        except ValueError:
            raise ValueError(f"Line {line_number}: invalid qubit in {line!r}")
        gate = gate_from_label(label, parameter=parameter, arity=len(qargs))
        operations.append((gate, qargs))

    if num_qubits is None:
        raise ValueError("Missing '# qubits N' header.")
    return CircuitDag(num_qubits, operations)
