import math
import unittest

import numpy as np

from qjump.core import (
    CCX,
    CX,
    CZ,
    H,
    I,
    S,
    SDG,
    SWAP,
    T,
    TDG,
    X,
    Y,
    Z,
    DegenerateStateError,
    GateDef,
    StateVector,
    apply_gate,
    barrier,
    cp,
    fidelity,
    format_angle,
    gate_from_label,
    is_unitary,
    marginal_probabilities,
    mcz,
    parse_angle,
    phase,
    probabilities,
    product_state,
    rx,
    ry,
    rz,
    sample_outcome,
)


class TestCore(unittest.TestCase):
    def setUp(self):
        self.zero = StateVector.zero(1)
        self.one = StateVector.basis(1, 1)
        self.plus = apply_gate(self.zero, H, [0])
        self.minus = apply_gate(self.one, H, [0])
        self.bell = apply_gate(apply_gate(StateVector.zero(2), H, [0]), CX, [0, 1])
        self.rng = np.random.default_rng(1234)


class TestStateVector(TestCore):
    def test_init_sunny(self):
        state = StateVector([1, 0, 0, 0])
        self.assertEqual(state.num_qubits, 2)
        self.assertEqual(len(state), 4)
        self.assertEqual(StateVector([0, 1], num_qubits=1), self.one)

    def test_init_rainy(self):
        with self.assertRaises(ValueError):
            StateVector([1, 0, 0])
        with self.assertRaises(ValueError):
            StateVector([[1, 0], [0, 0]])
        with self.assertRaises(ValueError):
            StateVector([1, 0], num_qubits=2)
        with self.assertRaises(ValueError):
            StateVector.basis(2, 4)

    def test_immutable(self):
        with self.assertRaises(ValueError):
            self.zero.amplitudes[0] = 0

    def test_str(self):
        self.assertEqual(str(StateVector.basis(3, 5)), "(1+0j)|101>")

    def test_eq(self):
        self.assertEqual(StateVector.zero(2), StateVector([1, 0, 0, 0]))
        self.assertNotEqual(StateVector.zero(2), StateVector.zero(1))
        self.assertNotEqual(self.zero, self.one)

    def test_normalized(self):
        state = StateVector([3, 4j]).normalized()
        self.assertAlmostEqual(state.norm(), 1.0, places=12)
        with self.assertRaises(DegenerateStateError):
            StateVector([0, 0]).normalized()

    def test_product_state(self):
        state = product_state([(math.pi, 0.0), (0.0, 0.0)])
        self.assertAlmostEqual(fidelity(state, StateVector.basis(2, 1)), 1.0, places=12)
        plus = product_state([(math.pi / 2, 0.0)])
        self.assertAlmostEqual(fidelity(plus, self.plus), 1.0, places=12)


class TestGates(TestCore):
    def test_builtin_gates_unitary(self):
        gates = [I, X, Y, Z, H, S, SDG, T, TDG, CX, CZ, CCX, SWAP, mcz(3)]
        gates += [rx(0.3), ry(-1.1), rz(math.pi / 8), phase(0.7), cp(2.5)]
        for gate in gates:
            self.assertTrue(is_unitary(gate.matrix), gate)

    def test_rz_matrix(self):
        theta = 0.4
        expected = np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])
        np.testing.assert_allclose(rz(theta).matrix, expected, atol=1e-12)

    def test_cx_matrix_little_endian(self):
        # control is the least significant bit of the matrix index
        expected = np.array(
            [[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]], dtype=complex
        )
        np.testing.assert_array_equal(CX.matrix, expected)

    def test_init_rainy(self):
        with self.assertRaises(ValueError):
            GateDef("bad", [[1, 1], [0, 1]])
        with self.assertRaises(ValueError):
            GateDef("bad", [[1, 0, 0], [0, 1, 0], [0, 0, 1]])
        with self.assertRaises(ValueError):
            GateDef("bad", [[1, 0]])
        with self.assertRaises(ValueError):
            GateDef("bad", [[1]])

    def test_str(self):
        self.assertEqual(str(H), "h")
        self.assertEqual(str(rz(math.pi / 8)), "rz(pi/8)")

    def test_eq(self):
        self.assertEqual(rz(math.pi / 4), rz(math.pi / 4))
        self.assertNotEqual(rz(math.pi / 4), rz(math.pi / 8))
        self.assertNotEqual(CX, CZ)

    def test_gate_from_label_sunny(self):
        self.assertEqual(gate_from_label("h"), H)
        self.assertEqual(gate_from_label("rz", math.pi / 2), rz(math.pi / 2))
        self.assertEqual(gate_from_label("mcz", arity=3), mcz(3))
        self.assertTrue(gate_from_label("barrier", arity=2).directive)

    def test_gate_from_label_rainy(self):
        with self.assertRaises(ValueError):
            gate_from_label("nope")
        with self.assertRaises(ValueError):
            gate_from_label("rz")
        with self.assertRaises(ValueError):
            gate_from_label("h", 0.5)
        with self.assertRaises(ValueError):
            gate_from_label("mcz")


class TestAngles(unittest.TestCase):
    def test_format_angle(self):
        self.assertEqual(format_angle(math.pi / 8), "pi/8")
        self.assertEqual(format_angle(-3 * math.pi / 4), "-3*pi/4")
        self.assertEqual(format_angle(math.pi), "pi")
        self.assertEqual(format_angle(0.0), "0")
        self.assertEqual(format_angle(0.3), "0.3")

    def test_parse_angle_sunny(self):
        self.assertEqual(parse_angle("pi/2"), math.pi / 2)
        self.assertEqual(parse_angle("pi/32"), math.pi / 32)
        self.assertAlmostEqual(parse_angle("-3*pi/4"), -3 * math.pi / 4)
        self.assertEqual(parse_angle("0.25"), 0.25)
        for theta in (math.pi / 16, 5 * math.pi / 3, -0.125):
            self.assertAlmostEqual(parse_angle(format_angle(theta)), theta, places=15)

    def test_parse_angle_rainy(self):
        with self.assertRaises(ValueError):
            parse_angle("pi/0")
        with self.assertRaises(ValueError):
            parse_angle("tau/2")


class TestApplyGate(TestCore):
    def test_x(self):
        self.assertEqual(apply_gate(self.zero, X, [0]), self.one)

    def test_z_on_plus(self):
        result = apply_gate(self.plus, Z, [0])
        np.testing.assert_allclose(result.amplitudes, self.minus.amplitudes, atol=1e-12)

    def test_rz_pi_on_plus(self):
        result = apply_gate(self.plus, rz(math.pi), [0])
        self.assertAlmostEqual(fidelity(result, self.minus), 1.0, places=12)

    def test_controls_listed_first(self):
        # qubit 0 set: |01>
        state = StateVector.basis(2, 1)
        self.assertEqual(apply_gate(state, CX, [0, 1]), StateVector.basis(2, 3))
        self.assertEqual(apply_gate(state, CX, [1, 0]), state)

    def test_ccx(self):
        state = StateVector.basis(3, 0b011)
        self.assertEqual(apply_gate(state, CCX, [0, 1, 2]), StateVector.basis(3, 0b111))
        state = StateVector.basis(3, 0b001)
        self.assertEqual(apply_gate(state, CCX, [0, 1, 2]), state)

    def test_swap(self):
        state = StateVector.basis(3, 0b001)
        self.assertEqual(apply_gate(state, SWAP, [0, 2]), StateVector.basis(3, 0b100))

    def test_mcz(self):
        full = StateVector.basis(3, 0b111)
        np.testing.assert_array_equal(
            apply_gate(full, mcz(3), [0, 1, 2]).amplitudes, -full.amplitudes
        )
        partial = StateVector.basis(3, 0b110)
        self.assertEqual(apply_gate(partial, mcz(3), [2, 0, 1]), partial)

    def test_barrier_is_identity(self):
        self.assertEqual(apply_gate(self.bell, barrier(2), [0, 1]), self.bell)

    def test_rainy(self):
        with self.assertRaises(ValueError):
            apply_gate(self.zero, X, [1])
        with self.assertRaises(ValueError):
            apply_gate(self.bell, CX, [0])
        with self.assertRaises(ValueError):
            apply_gate(self.bell, CX, [1, 1])
        with self.assertRaises(ValueError):
            apply_gate(self.zero, X, [-1])

    def test_involutions(self):
        state = product_state([(0.3, 1.2), (2.0, -0.4), (1.1, 0.5)])
        for gate in (X, Z, H):
            twice = apply_gate(apply_gate(state, gate, [1]), gate, [1])
            np.testing.assert_allclose(twice.amplitudes, state.amplitudes, atol=1e-9)
        there_and_back = apply_gate(apply_gate(state, rz(0.77), [2]), rz(-0.77), [2])
        self.assertAlmostEqual(fidelity(there_and_back, state), 1.0, places=9)

    def test_norm_preserved_over_random_sequences(self):
        n = 6
        single = [X, Y, Z, H, S, T, rx(0.4), ry(1.3), rz(2.1)]
        double = [CX, CZ, SWAP, cp(0.9)]
        state = StateVector.zero(n)
        for _ in range(1000):
            choice = self.rng.integers(3)
            if choice == 0:
                gate = single[self.rng.integers(len(single))]
            elif choice == 1:
                gate = double[self.rng.integers(len(double))]
            else:
                gate = CCX
            targets = self.rng.choice(n, size=gate.arity, replace=False)
            state = apply_gate(state, gate, targets)
        self.assertAlmostEqual(state.norm(), 1.0, delta=1e-9)
        self.assertAlmostEqual(float(probabilities(state).sum()), 1.0, delta=1e-9)


class TestMeasurement(TestCore):
    def test_probabilities(self):
        np.testing.assert_allclose(probabilities(self.zero), [1, 0])
        np.testing.assert_allclose(probabilities(self.plus), [0.5, 0.5], atol=1e-12)
        np.testing.assert_allclose(
            probabilities(self.bell), [0.5, 0, 0, 0.5], atol=1e-12
        )

    def test_marginal_probabilities(self):
        state = StateVector.basis(3, 0b110)
        np.testing.assert_array_equal(
            marginal_probabilities(state, [1, 2]), [0, 0, 0, 1]
        )
        np.testing.assert_array_equal(
            marginal_probabilities(state, [2, 0]), [0, 1, 0, 0]
        )
        np.testing.assert_allclose(marginal_probabilities(self.bell, [1]), [0.5, 0.5])
        with self.assertRaises(ValueError):
            marginal_probabilities(state, [0, 0])
        with self.assertRaises(ValueError):
            marginal_probabilities(state, [3])

    def test_sample_outcome_deterministic(self):
        for _ in range(10):
            self.assertEqual(sample_outcome(self.one, self.rng), 1)
        first = [sample_outcome(self.plus, np.random.default_rng(7)) for _ in range(5)]
        second = [sample_outcome(self.plus, np.random.default_rng(7)) for _ in range(5)]
        self.assertEqual(first, second)

    def test_sample_outcome_frequencies(self):
        samples = 100_000
        zeros = sum(sample_outcome(self.bell, self.rng) == 0 for _ in range(samples))
        self.assertTrue(0.48 <= zeros / samples <= 0.52)

    def test_sample_outcome_rainy(self):
        with self.assertRaises(DegenerateStateError):
            sample_outcome(StateVector([0, 0]), self.rng)

    def test_fidelity(self):
        self.assertAlmostEqual(fidelity(self.bell, self.bell), 1.0, places=12)
        self.assertEqual(fidelity(self.zero, self.one), 0.0)
        self.assertAlmostEqual(fidelity(self.zero, self.plus), 0.5, places=12)
        with self.assertRaises(ValueError):
            fidelity(self.zero, self.bell)
