from __future__ import annotations

import abc
import math
import sys
from typing import Sequence

if sys.version_info >= (3, 12):
    from typing import override
else:
    from typing_extensions import override

import attrs
import numpy as np
from bidict import bidict

from qjump.circuit import CircuitBuilder, CircuitDag, execute
from qjump.core import (
    CX,
    H,
    IDENTITY_MATRIX,
    SWAP,
    X,
    X_MATRIX,
    Y_MATRIX,
    Z_MATRIX,
    StateVector,
    cp,
    fidelity,
    marginal_probabilities,
    mcz,
    product_state,
    rx,
    ry,
    rz,
)


"""This module builds the benchmark algorithm circuits, each paired with the
predicate that decides whether a (possibly faulty) final state still produces
the ideal result.

Predicates look at exact output distributions, never at sampled shots, so each
run has a deterministic verdict. Bitstrings follow the little-endian
convention: for a register (q0, q1, ..., qk), the string "b_k...b_1 b_0" is
read with qubit 0 as its rightmost character.

Builders are deterministic: all randomness (oracle masks, marked elements,
Hamiltonian couplings) comes from an explicit seed.
"""


# CLI key -> display name
ALGORITHMS = bidict(
    {
        "bernstein-vazirani": "BernsteinVazirani",
        "deutsch-jozsa": "DeutschJozsa",
        "grover": "Grover",
        "simon": "Simon",
        "qpe": "QPE",
        "eoh": "EOH",
    }
)

PROBABILITY_TOLERANCE = 1e-9
FIDELITY_THRESHOLD = 1 - 1e-6


def _bits(value: int, width: int) -> list[int]:
    """Return the qubit indices set in value (bit q = qubit q)."""
    return [q for q in range(width) if value >> q & 1]


def _parse_bitstring(s: str | int, width: int) -> int:
    if isinstance(s, str):
        if len(s) != width or set(s) - {"0", "1"}:
            raise ValueError(f"Expected a bitstring of length {width}: {s!r}")
        return int(s, 2)
    s = int(s)
    if not 0 <= s < 1 << width:
        raise ValueError(f"Value does not fit in {width} bits: {s}")
    return s


def unique_argmax(
    distribution: np.ndarray, tolerance: float = PROBABILITY_TOLERANCE
) -> int | None:
    """Return the index of the largest entry, or None when another entry is
    within tolerance of it.
    """
    best = int(np.argmax(distribution))
    others = np.delete(distribution, best)
    if others.size and float(others.max()) >= float(distribution[best]) - tolerance:
        return None
    return best


# ===== Success Predicates =====


class SuccessPredicate(abc.ABC):
    """Decides whether a final state produces the ideal result."""

    @abc.abstractmethod
    def __repr__(self):
        pass

    @abc.abstractmethod
    def __call__(self, final: StateVector, ideal: StateVector) -> bool:
        """Return whether final counts as a successful run.

        Args:
            final: The state produced by the circuit under test.
            ideal: The state produced by the noiseless circuit.
        """
        pass


class ArgmaxPredicate(SuccessPredicate):
    """The most likely outcome on a register equals the expected value."""

    qubits: tuple[int, ...]
    expected: int

    def __init__(self, qubits: Sequence[int], expected: int):
        self.qubits = tuple(qubits)
        if not 0 <= expected < 1 << len(self.qubits):
            raise ValueError(f"Expected value out of range: {expected}")
        self.expected = expected

    def __repr__(self):
        return "ArgmaxPredicate(qubits=%r,expected=%r)" % (self.qubits, self.expected)

    @override
    def __call__(self, final: StateVector, ideal: StateVector) -> bool:
        probabilities = marginal_probabilities(final, self.qubits)
        return unique_argmax(probabilities) == self.expected


class ConstantBalancedPredicate(SuccessPredicate):
    """The most likely outcome is all-zeros iff the oracle is constant."""

    qubits: tuple[int, ...]
    constant: bool

    def __init__(self, qubits: Sequence[int], constant: bool):
        self.qubits = tuple(qubits)
        self.constant = constant

    def __repr__(self):
        return "ConstantBalancedPredicate(qubits=%r,constant=%r)" % (
            self.qubits,
            self.constant,
        )

    @override
    def __call__(self, final: StateVector, ideal: StateVector) -> bool:
        best = unique_argmax(marginal_probabilities(final, self.qubits))
        if best is None:
            return False
        return (best == 0) == self.constant


class OrthogonalSupportPredicate(SuccessPredicate):
    """Every possible outcome y on a register satisfies y.s = 0 (mod 2)."""

    qubits: tuple[int, ...]
    secret: int

    def __init__(self, qubits: Sequence[int], secret: int):
        self.qubits = tuple(qubits)
        self.secret = secret

    def __repr__(self):
        return "OrthogonalSupportPredicate(qubits=%r,secret=%r)" % (
            self.qubits,
            self.secret,
        )

    @override
    def __call__(self, final: StateVector, ideal: StateVector) -> bool:
        distribution = marginal_probabilities(final, self.qubits)
        support = np.flatnonzero(distribution > PROBABILITY_TOLERANCE)
        return all((int(y) & self.secret).bit_count() % 2 == 0 for y in support)


class FidelityPredicate(SuccessPredicate):
    """The final state matches the ideal one up to global phase."""

    threshold: float

    def __init__(self, threshold: float = FIDELITY_THRESHOLD):
        if not 0 < threshold <= 1:
            raise ValueError(f"Invalid fidelity threshold: {threshold}")
        self.threshold = threshold

    def __repr__(self):
        return "FidelityPredicate(threshold=%r)" % (self.threshold,)

    @override
    def __call__(self, final: StateVector, ideal: StateVector) -> bool:
        return fidelity(final, ideal) >= self.threshold


@attrs.frozen(eq=False)
class AlgorithmInstance:
    """A benchmark circuit, its input state and its success predicate."""

    name: str = attrs.field(validator=attrs.validators.in_(tuple(ALGORITHMS.values())))
    num_qubits: int
    dag: CircuitDag
    secret: object
    predicate: SuccessPredicate
    initial: StateVector = attrs.field()

    @initial.default
    def _zero_state(self):
        return StateVector.zero(self.num_qubits)

    @property
    def key(self) -> str:
        return ALGORITHMS.inverse[self.name]

    def ideal_state(self) -> StateVector:
        """Return the final state of the noiseless circuit."""
        return execute(self.dag, self.initial)


# ===== Builders =====


def build_bernstein_vazirani(n: int, s: str | int) -> AlgorithmInstance:
    """Return the Bernstein-Vazirani circuit for f(x) = s.x mod 2.

    Problem qubits are 0..n-1, the ancilla is qubit n. The circuit prepares the
    ancilla in |->, applies an H layer, the phase oracle (one CX per set bit of
    s), and a final H layer on the problem qubits; it has 2n + 2 + popcount(s)
    gates.

    Args:
        n: Number of problem bits.
        s: Secret, as a bitstring (qubit 0 rightmost) or an integer.

    Raises:
        ValueError: If n < 1, or s does not fit in n bits or is zero.
    """
    if n < 1:
        raise ValueError(f"Bernstein-Vazirani needs at least one problem bit: {n}")
    secret = _parse_bitstring(s, n)
    if secret == 0:
        raise ValueError("The secret string must be nonzero.")

    ancilla = n
    builder = CircuitBuilder(n + 1)
    builder.add(X, ancilla)
    builder.layer(H, range(n + 1))
    for q in _bits(secret, n):
        builder.add(CX, q, ancilla)
    builder.layer(H, range(n))
    return AlgorithmInstance(
        name="BernsteinVazirani",
        num_qubits=n + 1,
        dag=builder.build(),
        secret=secret,
        predicate=ArgmaxPredicate(range(n), secret),
    )


def build_deutsch_jozsa(
    n: int, mode: str = "balanced", seed: int = 0
) -> AlgorithmInstance:
    """Return the Deutsch-Jozsa circuit on n problem qubits plus an ancilla.

    The constant oracle is empty for f = 0 and a single X on the ancilla for
    f = 1. The balanced oracle computes f(x) = x.s (xor an optional constant)
    with a seeded nonzero mask s.

    Raises:
        ValueError: If n < 1 or mode is not "constant" or "balanced".
    """
    if n < 1:
        raise ValueError(f"Deutsch-Jozsa needs at least one problem bit: {n}")
    if mode not in ("constant", "balanced"):
        raise ValueError(f"Unknown oracle mode: {mode}")
    rng = np.random.default_rng(seed)

    ancilla = n
    builder = CircuitBuilder(n + 1)
    builder.add(X, ancilla)
    builder.layer(H, range(n + 1))
    if mode == "constant":
        value = int(rng.integers(2))
        if value:
            builder.add(X, ancilla)
        secret = ("constant", value)
    else:
        mask = int(rng.integers(1, 1 << n))
        flip = int(rng.integers(2))
        for q in _bits(mask, n):
            builder.add(CX, q, ancilla)
        if flip:
            builder.add(X, ancilla)
        secret = ("balanced", mask)
    builder.layer(H, range(n))
    return AlgorithmInstance(
        name="DeutschJozsa",
        num_qubits=n + 1,
        dag=builder.build(),
        secret=secret,
        predicate=ConstantBalancedPredicate(range(n), mode == "constant"),
    )


def grover_iterations(n: int) -> int:
    """Return the default number of Grover iterations, round(pi/4 sqrt(2^n))."""
    return round(math.pi / 4 * math.sqrt(1 << n))


def build_grover(
    n: int, marked: int, iterations: int | None = None
) -> AlgorithmInstance:
    """Return Grover search for a single marked basis state.

    The oracle flips the phase of |marked> with X gates around a
    multi-controlled Z; the diffuser is H X MCZ X H on every qubit.

    Raises:
        ValueError: If n < 2, marked is out of range or iterations < 1.
    """
    if n < 2:
        raise ValueError(f"Grover needs at least two qubits: {n}")
    marked = _parse_bitstring(marked, n)
    if iterations is None:
        iterations = grover_iterations(n)
    if iterations < 1:
        raise ValueError(f"Invalid number of iterations: {iterations}")

    qubits = range(n)
    zeros = [q for q in qubits if not marked >> q & 1]
    builder = CircuitBuilder(n)
    builder.layer(H, qubits)
    for _ in range(iterations):
        builder.layer(X, zeros)
        builder.add(mcz(n), *qubits)
        builder.layer(X, zeros)

        builder.layer(H, qubits)
        builder.layer(X, qubits)
        builder.add(mcz(n), *qubits)
        builder.layer(X, qubits)
        builder.layer(H, qubits)
    return AlgorithmInstance(
        name="Grover",
        num_qubits=n,
        dag=builder.build(),
        secret=marked,
        predicate=ArgmaxPredicate(qubits, marked),
    )


def build_simon(n: int, s: str | int, seed: int = 0) -> AlgorithmInstance:
    """Return Simon's circuit on 2n qubits for the hidden string s.

    The oracle copies the first register into the second, then xors s into
    the second register controlled on the lowest set bit of s, which makes
    f(x) = f(x xor s). A seeded X mask on the second register varies the
    oracle without breaking that property.

    Raises:
        ValueError: If n < 1 or s is zero or does not fit in n bits.
    """
    if n < 1:
        raise ValueError(f"Simon needs at least one problem bit: {n}")
    secret = _parse_bitstring(s, n)
    if secret == 0:
        raise ValueError("The hidden string must be nonzero.")
    rng = np.random.default_rng(seed)
    mask = int(rng.integers(1 << n))

    first = range(n)
    builder = CircuitBuilder(2 * n)
    builder.layer(H, first)
    for q in first:
        builder.add(CX, q, n + q)
    pivot = _bits(secret, n)[0]
    for q in _bits(secret, n):
        builder.add(CX, pivot, n + q)
    builder.layer(X, [n + q for q in _bits(mask, n)])
    builder.layer(H, first)
    return AlgorithmInstance(
        name="Simon",
        num_qubits=2 * n,
        dag=builder.build(),
        secret=secret,
        predicate=OrthogonalSupportPredicate(first, secret),
    )


def add_inverse_qft(builder: CircuitBuilder, qubits: Sequence[int]) -> CircuitBuilder:
    """Append the inverse quantum Fourier transform on the given register."""
    m = len(qubits)
    for q in range(m // 2):
        builder.add(SWAP, qubits[q], qubits[m - q - 1])
    for j in range(m):
        for k in range(j):
            builder.add(cp(-math.pi / (1 << (j - k))), qubits[k], qubits[j])
        builder.add(H, qubits[j])
    return builder


def build_qpe(m: int, theta: float) -> AlgorithmInstance:
    """Return phase estimation of the eigenvalue e^{2 pi i theta} of P(2 pi theta).

    Counting qubits are 0..m-1, the eigenstate qubit m is prepared in |1>.
    Counting qubit j controls the phase gate raised to the power 2^j.

    Raises:
        ValueError: If m < 1 or theta is not k / 2^m for an integer 0 <= k < 2^m.
    """
    if m < 1:
        raise ValueError(f"Phase estimation needs at least one counting qubit: {m}")
    scaled = theta * (1 << m)
    k = round(scaled)
    if abs(scaled - k) > 1e-9 or not 0 <= k < 1 << m:
        raise ValueError(f"Phase is not exactly representable with {m} bits: {theta}")

    counting = list(range(m))
    builder = CircuitBuilder(m + 1)
    builder.add(X, m)
    builder.layer(H, counting)
    for j in counting:
        builder.add(cp(2 * math.pi * theta * (1 << j)), j, m)
    add_inverse_qft(builder, counting)
    return AlgorithmInstance(
        name="QPE",
        num_qubits=m + 1,
        dag=builder.build(),
        secret=k,
        predicate=ArgmaxPredicate(counting, k),
    )


# ===== Hamiltonian Simulation =====


_PAULI_MATRICES = {"I": IDENTITY_MATRIX, "X": X_MATRIX, "Y": Y_MATRIX, "Z": Z_MATRIX}


def _check_paulis(instance, attribute, value):
    if not value or set(value) - set(_PAULI_MATRICES):
        raise ValueError(f"Invalid Pauli string: {value!r}")


@attrs.frozen
class PauliTerm:
    """A weighted Pauli string; paulis[q] is the operator on qubit q."""

    coefficient: float = attrs.field(converter=float)
    paulis: str = attrs.field(validator=_check_paulis)

    @property
    def support(self) -> list[int]:
        return [q for q, p in enumerate(self.paulis) if p != "I"]


def transverse_field_ising(n: int, seed: int = 0) -> list[PauliTerm]:
    """Return a seeded transverse-field Ising chain: J_i Z_i Z_{i+1} couplings
    followed by h_i X_i fields, with J and h uniform in [0.5, 1.5].
    """
    if n < 1:
        raise ValueError(f"Invalid number of qubits: {n}")
    rng = np.random.default_rng(seed)
    couplings = rng.uniform(0.5, 1.5, size=n - 1)
    fields = rng.uniform(0.5, 1.5, size=n)

    def string(ops: dict[int, str]) -> str:
        return "".join(ops.get(q, "I") for q in range(n))

    terms = [
        PauliTerm(j, string({i: "Z", i + 1: "Z"})) for i, j in enumerate(couplings)
    ]
    terms.extend(PauliTerm(h, string({i: "X"})) for i, h in enumerate(fields))
    return terms


def hamiltonian_matrix(terms: Sequence[PauliTerm], n: int) -> np.ndarray:
    """Return the dense 2^n x 2^n matrix of a Pauli sum."""
    matrix = np.zeros((1 << n, 1 << n), dtype=complex)
    for term in terms:
        if len(term.paulis) != n:
            raise ValueError(f"Pauli string {term.paulis!r} is not on {n} qubits.")
        product = np.ones((1, 1), dtype=complex)
        for p in term.paulis:
            product = np.kron(_PAULI_MATRICES[p], product)
        matrix += term.coefficient * product
    return matrix


def _add_pauli_rotation(builder: CircuitBuilder, term: PauliTerm, angle: float):
    """Append exp(-i angle/2 P) for the Pauli string P of the term."""
    support = term.support
    if not support:
        # Global phase
        return
    if len(support) == 1:
        q = support[0]
        rotation = {"X": rx, "Y": ry, "Z": rz}[term.paulis[q]]
        builder.add(rotation(angle), q)
        return

    # Rotate every factor to Z, then compute the parity onto the last qubit
    for q in support:
        if term.paulis[q] == "X":
            builder.add(H, q)
        elif term.paulis[q] == "Y":
            builder.add(rx(math.pi / 2), q)
    for a, b in zip(support, support[1:]):
        builder.add(CX, a, b)
    builder.add(rz(angle), support[-1])
    for a, b in reversed(list(zip(support, support[1:]))):
        builder.add(CX, a, b)
    for q in support:
        if term.paulis[q] == "X":
            builder.add(H, q)
        elif term.paulis[q] == "Y":
            builder.add(rx(-math.pi / 2), q)


def eoh_initial_state(n: int, seed: int = 0) -> StateVector:
    """Return a seeded product state away from the X, Y and Z eigenstates."""
    rng = np.random.default_rng([seed, 1])
    thetas = rng.uniform(0.25 * math.pi, 0.75 * math.pi, size=n)
    phis = rng.uniform(0, 2 * math.pi, size=n)
    return product_state(list(zip(thetas, phis)))


def build_eoh(
    n: int,
    hamiltonian: Sequence[PauliTerm] | None = None,
    t: float = 1.0,
    trotter_steps: int = 2,
    seed: int = 0,
) -> AlgorithmInstance:
    """Return a first-order Trotter circuit approximating e^{-iHt}.

    Args:
        n: Number of system qubits.
        hamiltonian: Pauli terms on n qubits; defaults to
            transverse_field_ising(n, seed).
        t: Evolution time.
        trotter_steps: Number of Trotter steps.
        seed: Seed of the default Hamiltonian and of the initial product state.

    Raises:
        ValueError: If n < 1, trotter_steps < 1 or a term has the wrong length.
    """
    if n < 1:
        raise ValueError(f"Invalid number of qubits: {n}")
    if trotter_steps < 1:
        raise ValueError(f"Invalid number of Trotter steps: {trotter_steps}")
    if hamiltonian is None:
        terms = transverse_field_ising(n, seed)
    else:
        terms = list(hamiltonian)
    for term in terms:
        if len(term.paulis) != n:
            raise ValueError(f"Pauli string {term.paulis!r} is not on {n} qubits.")

    dt = t / trotter_steps
    builder = CircuitBuilder(n)
    for _ in range(trotter_steps):
        for term in terms:
            _add_pauli_rotation(builder, term, 2 * term.coefficient * dt)
    return AlgorithmInstance(
        name="EOH",
        num_qubits=n,
        dag=builder.build(),
        secret=tuple(terms),
        predicate=FidelityPredicate(),
        initial=eoh_initial_state(n, seed),
    )


# ===== Registry =====


def register_size(key: str, num_qubits: int) -> int:
    """Return the builder's size argument for a total register size."""
    if key in ("bernstein-vazirani", "deutsch-jozsa", "qpe"):
        return num_qubits - 1
    if key == "simon":
        return (num_qubits + 1) // 2
    if key in ("grover", "eoh"):
        return num_qubits
    raise ValueError(f"Unknown algorithm: {key}")


def build_instance(key: str, num_qubits: int, seed: int = 0) -> AlgorithmInstance:
    """Return the seeded benchmark instance of an algorithm for a grid size.

    The grid size counts every qubit. Simon needs an even register, so odd
    sizes round up and the instance reports its real total. Deutsch-Jozsa
    oracles are constant for even seeds and balanced for odd ones.

    Raises:
        ValueError: If the algorithm is unknown or the size too small.
    """
    size = register_size(key, num_qubits)
    rng = np.random.default_rng(seed)
    if key == "bernstein-vazirani":
        if size < 1:
            raise ValueError(f"Too few qubits for {key}: {num_qubits}")
        return build_bernstein_vazirani(size, int(rng.integers(1, 1 << size)))
    if key == "deutsch-jozsa":
        mode = "balanced" if seed % 2 else "constant"
        return build_deutsch_jozsa(size, mode, seed)
    if key == "grover":
        if size < 2:
            raise ValueError(f"Too few qubits for {key}: {num_qubits}")
        return build_grover(size, int(rng.integers(1 << size)))
    if key == "simon":
        if size < 1:
            raise ValueError(f"Too few qubits for {key}: {num_qubits}")
        return build_simon(size, int(rng.integers(1, 1 << size)), seed)
    if key == "qpe":
        if size < 1:
            raise ValueError(f"Too few qubits for {key}: {num_qubits}")
        k = int(rng.integers(1 << size))
        return build_qpe(size, k / (1 << size))
    return build_eoh(size, seed=seed)
