import math
import unittest

import numpy as np

from qjump.algorithms import build_bernstein_vazirani
from qjump.circuit import (
    CircuitBuilder,
    CircuitDag,
    ErrorSpec,
    depth,
    dump_circuit,
    execute,
    inject_error,
    injectable_indices,
    op_nodes,
    string_to_circuit,
)
from qjump.core import (
    CX,
    H,
    H_MATRIX,
    I,
    X,
    X_MATRIX,
    Z,
    StateVector,
    barrier,
    fidelity,
    probabilities,
    product_state,
    rz,
)


class TestCircuit(unittest.TestCase):
    def setUp(self):
        self.empty = CircuitDag(2)
        self.bell = CircuitBuilder(2).add(H, 0).add(CX, 0, 1).build()
        self.chain = CircuitDag(2, [(H, [0]), (CX, [0, 1]), (X, [1])])
        self.ghz = (
            CircuitBuilder(3)
            .add(H, 0)
            .add(CX, 0, 1)
            .add(barrier(3), 0, 1, 2)
            .add(CX, 1, 2)
            .add(rz(math.pi / 8), 2)
            .build()
        )


class TestCircuitDag(TestCircuit):
    def test_init_rainy(self):
        with self.assertRaises(ValueError):
            CircuitDag(-1)
        with self.assertRaises(ValueError):
            CircuitDag(2, [(CX, [0])])
        with self.assertRaises(ValueError):
            CircuitDag(2, [(H, [2])])
        with self.assertRaises(ValueError):
            CircuitDag(2, [(CX, [1, 1])])

    def test_eq(self):
        self.assertEqual(self.bell, CircuitDag.from_gates(2, [(H, [0]), (CX, [0, 1])]))
        self.assertNotEqual(self.bell, CircuitDag(2, [(H, [1]), (CX, [0, 1])]))
        self.assertNotEqual(self.bell, CircuitDag(3, [(H, [0]), (CX, [0, 1])]))

    def test_append_returns_new_circuit(self):
        longer = self.bell.append(X, [1])
        self.assertEqual(len(self.bell), 2)
        self.assertEqual(len(longer), 3)
        self.assertEqual([str(n) for n in longer.wire(1)], ["cx 0 1", "x 1"])


class TestOpNodes(TestCircuit):
    def test_empty(self):
        self.assertEqual(op_nodes(self.empty), [])

    def test_wire_order(self):
        nodes = op_nodes(self.bell)
        self.assertEqual([(n.gate, n.qargs) for n in nodes], [(H, (0,)), (CX, (0, 1))])

    def test_independent_nodes_keep_insertion_order(self):
        dag = CircuitDag(3, [(H, [2]), (H, [0]), (X, [1]), (CX, [0, 2])])
        self.assertEqual(
            [str(n) for n in op_nodes(dag)], ["h 2", "h 0", "x 1", "cx 0 2"]
        )

    def test_bernstein_vazirani_gate_count(self):
        instance = build_bernstein_vazirani(3, "101")
        self.assertEqual(len(op_nodes(instance.dag)), 2 * 3 + 2 + 2)

    def test_injectable_indices_skip_directives(self):
        self.assertEqual(injectable_indices(self.ghz), [0, 1, 3, 4])


class TestInjectError(TestCircuit):
    def test_x_after_hadamard(self):
        dag = CircuitDag(1, [(H, [0])])
        result = execute(inject_error(dag, X, 0), StateVector.zero(1))
        expected = X_MATRIX @ H_MATRIX @ np.array([1, 0])
        np.testing.assert_allclose(result.amplitudes, expected, atol=1e-12)

    def test_error_on_every_wire_of_the_node(self):
        injected = inject_error(self.bell, Z, 1)
        self.assertEqual(len(injected), len(self.bell) + 2)
        self.assertEqual([str(n) for n in injected.wire(0)], ["h 0", "cx 0 1", "z 0"])
        self.assertEqual([str(n) for n in injected.wire(1)], ["cx 0 1", "z 1"])

    def test_original_unchanged(self):
        inject_error(self.bell, X, 0)
        self.assertEqual(len(self.bell), 2)
        self.assertEqual([str(n) for n in op_nodes(self.bell)], ["h 0", "cx 0 1"])

    def test_error_follows_selected_node(self):
        injected = inject_error(self.chain, X, 0)
        self.assertEqual(
            [str(n) for n in op_nodes(injected)], ["h 0", "x 0", "cx 0 1", "x 1"]
        )

    def test_earlier_indices_survive(self):
        dag = CircuitDag(2, [(H, [0]), (H, [1]), (CX, [0, 1]), (H, [0])])
        once = inject_error(dag, Z, 2)
        self.assertEqual(op_nodes(once)[:2], op_nodes(dag)[:2])
        twice = inject_error(once, X, 0)
        self.assertEqual(str(op_nodes(twice)[0]), "h 0")
        self.assertEqual(len(twice), len(dag) + 3)

    def test_identity_error_changes_nothing(self):
        initial = product_state([(0.4, 0.1), (1.3, 2.2), (2.0, -1.0)])
        expected = execute(self.ghz, initial)
        for index in injectable_indices(self.ghz):
            result = execute(inject_error(self.ghz, I, index), initial)
            np.testing.assert_allclose(
                probabilities(result), probabilities(expected), atol=1e-12
            )

    def test_depth_never_decreases(self):
        for dag in (self.bell, self.chain, self.ghz):
            for index in injectable_indices(dag):
                self.assertGreaterEqual(depth(inject_error(dag, X, index)), depth(dag))

    def test_rainy(self):
        with self.assertRaises(ValueError):
            inject_error(self.bell, X, 2)
        with self.assertRaises(ValueError):
            inject_error(self.bell, X, -1)
        with self.assertRaises(ValueError):
            inject_error(self.bell, CX, 0)
        with self.assertRaises(ValueError):
            inject_error(self.ghz, X, 2)


class TestDepth(TestCircuit):
    def test_depth(self):
        self.assertEqual(depth(self.empty), 0)
        self.assertEqual(depth(CircuitDag(2, [(H, [0]), (H, [1])])), 1)
        self.assertEqual(depth(self.chain), 3)

    def test_barrier_adds_nothing(self):
        # h, cx, cx, rz on the longest path; the barrier only synchronizes
        self.assertEqual(depth(self.ghz), 4)


class TestExecute(TestCircuit):
    def test_empty(self):
        self.assertEqual(execute(self.empty, StateVector.zero(2)), StateVector.zero(2))

    def test_bell(self):
        result = execute(self.bell, StateVector.zero(2))
        expected = np.array([1, 0, 0, 1]) / math.sqrt(2)
        np.testing.assert_allclose(result.amplitudes, expected, atol=1e-12)

    def test_independent_reordering(self):
        a = CircuitDag(2, [(H, [0]), (X, [1]), (CX, [0, 1]), (rz(0.3), [0])])
        b = CircuitDag(2, [(X, [1]), (H, [0]), (rz(0.3), [0]), (CX, [0, 1])])
        initial = product_state([(0.7, 0.2), (1.9, 1.0)])
        self.assertAlmostEqual(
            fidelity(execute(a, initial), execute(b, initial)), 1.0, delta=1e-9
        )

    def test_dimension_mismatch(self):
        with self.assertRaises(ValueError):
            execute(self.bell, StateVector.zero(3))


class TestTextFormat(TestCircuit):
    def test_dump(self):
        dag = self.bell.append(rz(math.pi / 8), [1])
        self.assertEqual(dump_circuit(dag), "# qubits 2\nh 0\ncx 0 1\nrz pi/8 1\n")

    def test_parse_dump(self):
        for dag in (self.empty, self.bell, self.chain, self.ghz):
            self.assertEqual(string_to_circuit(dump_circuit(dag)), dag)

    def test_parse_sunny(self):
        text = "# qubits 3\n\nh 0\nmcz 0 1 2\nrz -pi/4 2\n"
        dag = string_to_circuit(text)
        self.assertEqual(dag.num_qubits, 3)
        self.assertEqual(
            [str(n) for n in op_nodes(dag)], ["h 0", "mcz 0 1 2", "rz -pi/4 2"]
        )

    def test_parse_rainy(self):
        with self.assertRaises(ValueError):
            string_to_circuit("h 0\n")
        with self.assertRaises(ValueError):
            string_to_circuit("# qubits 1\nh a\n")
        with self.assertRaises(ValueError):
            string_to_circuit("# qubits 1\nrz\n")
        with self.assertRaises(ValueError):
            string_to_circuit("# qubits 1\nfoo 0\n")
        with self.assertRaises(ValueError):
            string_to_circuit("# qubits 1\ncx 0 1\n")


class TestErrorSpec(unittest.TestCase):
    def test_init_sunny(self):
        spec = ErrorSpec("rz", 2, math.pi / 16)
        self.assertEqual(spec.angle_label, "pi/16")
        self.assertEqual(spec.placement, "uniform-random")
        self.assertEqual(ErrorSpec("pauli").angle_label, "")
        self.assertEqual(ErrorSpec("x", 2, placement=(3, 1)).placement, (3, 1))
        self.assertEqual(ErrorSpec("rz", 1, 0.1, free_angle=True).angle, 0.1)

    def test_init_rainy(self):
        with self.assertRaises(ValueError):
            ErrorSpec("rz")
        with self.assertRaises(ValueError):
            ErrorSpec("x", 1, math.pi / 2)
        with self.assertRaises(ValueError):
            ErrorSpec("rz", 1, 0.1)
        with self.assertRaises(ValueError):
            ErrorSpec("w")
        with self.assertRaises(ValueError):
            ErrorSpec("z", 3)
        with self.assertRaises(ValueError):
            ErrorSpec("z", 2, placement=(1,))
