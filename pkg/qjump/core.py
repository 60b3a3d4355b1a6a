from __future__ import annotations

import functools
import math
import re
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np


"""This module provides dense state vectors of qubit registers and the standard
gates that act on them.

A state of n qubits is a complex array of 2^n amplitudes. Qubit order is
little-endian: qubit q is bit q of the basis index, so basis index 5 = 0b101
has qubits 0 and 2 set.

A gate is a unitary on k qubits, given by the ordered tuple of qubits it acts
on. Controlled gates list their controls first. For the gate's own matrix the
same little-endian rule applies: the first listed qubit is the least
significant bit of the matrix index.
"""


UNITARY_TOLERANCE = 1e-10
NORM_TOLERANCE = 1e-9
# Below this squared norm a state is considered empty
DEGENERATE_NORM = 1e-12


class DegenerateStateError(ValueError):
    """Raised when a state with (numerically) zero norm is sampled."""


# ===== Helpers =====


def is_unitary(matrix: np.ndarray, tolerance: float = UNITARY_TOLERANCE) -> bool:
    """Return whether the given square matrix satisfies U^dagger U = I, comparing
    entries by maximum absolute deviation.
    """
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        return False
    deviation = matrix.conj().T @ matrix - np.eye(matrix.shape[0])
    return float(np.max(np.abs(deviation), initial=0.0)) <= tolerance


def qubit_count(size: int) -> int:
    """Return n such that size = 2^n.

    Raises:
        ValueError: If size is not a power of two.
    """
    n = size.bit_length() - 1
    if size < 1 or 1 << n != size:
        raise ValueError(f"Dimension is not a power of two: {size}")
    return n


def _axis(num_qubits: int, qubit: int) -> int:
    """Return the tensor axis holding the given qubit in a C-ordered reshape."""
    return num_qubits - 1 - qubit


# ===== State Vectors =====


class StateVector:
    """A pure state of a register of qubits."""

    num_qubits: int
    amplitudes: np.ndarray

    def __init__(self, amplitudes: Iterable[complex], num_qubits: int | None = None):
        """Initialize this state from its basis-state amplitudes.

        Args:
            amplitudes: 2^n complex amplitudes, little-endian qubit order.
            num_qubits: Optional expected register size.

        Raises:
            ValueError: If the length is not a power of two, or does not match
                num_qubits.
        """
        amplitudes = np.array(amplitudes, dtype=complex)
        if amplitudes.ndim != 1:
            raise ValueError(f"Amplitudes must be one-dimensional: {amplitudes.shape}")
        n = qubit_count(amplitudes.shape[0])
        if num_qubits is not None and num_qubits != n:
            raise ValueError(
                f"Expected {num_qubits} qubits, got {amplitudes.shape[0]} amplitudes."
            )
        amplitudes.flags.writeable = False
        self.num_qubits = n
        self.amplitudes = amplitudes

    @classmethod
    def _wrap(cls, amplitudes: np.ndarray) -> StateVector:
        # Takes ownership of a freshly computed complex array, skipping the copy.
        state = cls.__new__(cls)
        amplitudes.flags.writeable = False
        state.num_qubits = amplitudes.shape[0].bit_length() - 1
        state.amplitudes = amplitudes
        return state

    @classmethod
    def zero(cls, num_qubits: int) -> StateVector:
        """Return |0...0> on the given number of qubits."""
        return cls.basis(num_qubits, 0)

    @classmethod
    def basis(cls, num_qubits: int, index: int) -> StateVector:
        """Return the computational basis state |index>."""
        if num_qubits < 0:
            raise ValueError(f"Invalid number of qubits: {num_qubits}")
        if not 0 <= index < 1 << num_qubits:
            raise ValueError(f"Basis index out of range: {index}")
        amplitudes = np.zeros(1 << num_qubits, dtype=complex)
        amplitudes[index] = 1.0
        return cls._wrap(amplitudes)

    def __repr__(self):
        return "StateVector(num_qubits=%r,amplitudes=%r)" % (
            self.num_qubits,
            self.amplitudes,
        )

    def __str__(self):
        terms = [
            f"({amplitude:.4g})|{index:0{self.num_qubits}b}>"
            for index, amplitude in enumerate(self.amplitudes)
            if abs(amplitude) > NORM_TOLERANCE
        ]
        return " + ".join(terms) if terms else "0"

    def __eq__(self, other: StateVector):
        return (
            isinstance(other, StateVector)
            and self.num_qubits == other.num_qubits
            and np.array_equal(self.amplitudes, other.amplitudes)
        )

    def __len__(self):
        return self.amplitudes.shape[0]

    def norm(self) -> float:
        """Return the 2-norm of the amplitude vector."""
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> StateVector:
        """Return this state scaled to unit norm.

        Raises:
            DegenerateStateError: If the state has zero norm.
        """
        norm = self.norm()
        if norm**2 < DEGENERATE_NORM:
            raise DegenerateStateError("Cannot normalize a zero state.")
        return StateVector._wrap(self.amplitudes / norm)


def product_state(bloch_angles: Sequence[tuple[float, float]]) -> StateVector:
    """Return the product state whose qubit q is
    cos(theta/2)|0> + e^{i phi} sin(theta/2)|1>, where (theta, phi) = bloch_angles[q].
    """
    amplitudes = np.ones(1, dtype=complex)
    for theta, phi in bloch_angles:
        single = np.array(
            [math.cos(theta / 2), np.exp(1j * phi) * math.sin(theta / 2)],
            dtype=complex,
        )
        # Later qubits are more significant
        amplitudes = np.kron(single, amplitudes)
    return StateVector._wrap(amplitudes)


# ===== Gates =====


class GateDef:
    """A unitary gate on a fixed number of qubits.

    The gate is stored as a base unitary acting on its target qubits, plus a
    number of leading control qubits. The base is applied only to the slice of
    the state in which every control is 1, so multi-controlled gates never need
    their full matrix.
    """

    label: str
    arity: int
    parameter: float | None
    num_controls: int
    base: np.ndarray
    directive: bool

    def __init__(
        self,
        label: str,
        base: Iterable[Iterable[complex]],
        num_controls: int = 0,
        parameter: float | None = None,
        directive: bool = False,
    ):
        """Initialize this gate.

        Args:
            label: Lower-case gate name, e.g. "h", "cx", "rz".
            base: Unitary on the target qubits, dimension 2^t.
            num_controls: Number of control qubits preceding the targets.
            parameter: Rotation angle in radians, for parametrized gates.
            directive: Whether this is a non-operation such as a barrier.

        Raises:
            ValueError: If base is not a unitary of power-of-two dimension or
                num_controls is negative.
        """
        base = np.array(base, dtype=complex)
        if base.ndim != 2 or base.shape[0] != base.shape[1]:
            raise ValueError(f"Gate matrix must be square: {base.shape}")
        targets = qubit_count(base.shape[0])
        if targets < 1:
            raise ValueError("A gate must act on at least one qubit.")
        if num_controls < 0:
            raise ValueError(f"Invalid number of controls: {num_controls}")
        if not is_unitary(base):
            raise ValueError(f"Gate matrix of {label} is not unitary.")
        base.flags.writeable = False

        self.label = label
        self.base = base
        self.num_controls = num_controls
        self.arity = num_controls + targets
        self.parameter = None if parameter is None else float(parameter)
        self.directive = directive

    def __repr__(self):
        return "GateDef(label=%r,arity=%r,parameter=%r)" % (
            self.label,
            self.arity,
            self.parameter,
        )

    def __str__(self):
        if self.parameter is None:
            return self.label
        return f"{self.label}({format_angle(self.parameter)})"

    def __eq__(self, other: GateDef):
        return (
            isinstance(other, GateDef)
            and self.label == other.label
            and self.num_controls == other.num_controls
            and self.parameter == other.parameter
            and self.directive == other.directive
            and np.array_equal(self.base, other.base)
        )

    def __hash__(self):
        return hash((self.label, self.arity, self.parameter))

    @functools.cached_property
    def matrix(self) -> np.ndarray:
        """The full 2^k x 2^k unitary, column c being the image of basis state c."""
        size = 1 << self.arity
        columns = [
            apply_gate(StateVector.basis(self.arity, c), self, range(self.arity))
            for c in range(size)
        ]
        matrix = np.column_stack([column.amplitudes for column in columns])
        matrix.flags.writeable = False
        return matrix


_SQRT2_INV = 1 / math.sqrt(2)

IDENTITY_MATRIX = np.eye(2, dtype=complex)
X_MATRIX = np.array([[0, 1], [1, 0]], dtype=complex)
Y_MATRIX = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z_MATRIX = np.array([[1, 0], [0, -1]], dtype=complex)
H_MATRIX = np.array([[1, 1], [1, -1]], dtype=complex) * _SQRT2_INV

I = GateDef("id", IDENTITY_MATRIX)
X = GateDef("x", X_MATRIX)
Y = GateDef("y", Y_MATRIX)
Z = GateDef("z", Z_MATRIX)
H = GateDef("h", H_MATRIX)
S = GateDef("s", [[1, 0], [0, 1j]])
SDG = GateDef("sdg", [[1, 0], [0, -1j]])
T = GateDef("t", [[1, 0], [0, np.exp(1j * math.pi / 4)]])
TDG = GateDef("tdg", [[1, 0], [0, np.exp(-1j * math.pi / 4)]])
CX = GateDef("cx", X_MATRIX, num_controls=1)
CZ = GateDef("cz", Z_MATRIX, num_controls=1)
CCX = GateDef("ccx", X_MATRIX, num_controls=2)
SWAP = GateDef(
    "swap", [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]]
)


def rx(theta: float) -> GateDef:
    """Return RX(theta) = exp(-i theta X / 2)."""
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return GateDef("rx", [[c, -1j * s], [-1j * s, c]], parameter=theta)


def ry(theta: float) -> GateDef:
    """Return RY(theta) = exp(-i theta Y / 2)."""
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return GateDef("ry", [[c, -s], [s, c]], parameter=theta)


def rz(theta: float) -> GateDef:
    """Return RZ(theta) = diag(e^{-i theta/2}, e^{i theta/2})."""
    return GateDef(
        "rz",
        [[np.exp(-0.5j * theta), 0], [0, np.exp(0.5j * theta)]],
        parameter=theta,
    )


def phase(lam: float) -> GateDef:
    """Return the phase gate P(lam) = diag(1, e^{i lam})."""
    return GateDef("p", [[1, 0], [0, np.exp(1j * lam)]], parameter=lam)


def cp(lam: float) -> GateDef:
    """Return the controlled phase gate; qargs are (control, target)."""
    return GateDef("cp", [[1, 0], [0, np.exp(1j * lam)]], num_controls=1, parameter=lam)


def mcz(arity: int) -> GateDef:
    """Return the Z gate controlled on arity - 1 qubits. It flips the sign of the
    basis states in which all of its qubits are 1, so qarg order does not matter.
    """
    if arity < 1:
        raise ValueError(f"Invalid arity: {arity}")
    return GateDef("mcz", Z_MATRIX, num_controls=arity - 1)


def barrier(arity: int) -> GateDef:
    """Return a barrier directive spanning arity qubits."""
    if arity < 1:
        raise ValueError(f"Invalid arity: {arity}")
    return GateDef("barrier", IDENTITY_MATRIX, num_controls=arity - 1, directive=True)


_FIXED_GATES = {
    gate.label: gate for gate in (I, X, Y, Z, H, S, SDG, T, TDG, CX, CZ, CCX, SWAP)
}
_PARAMETRIZED_GATES = {"rx": rx, "ry": ry, "rz": rz, "p": phase, "cp": cp}
_VARIADIC_GATES = {"mcz": mcz, "barrier": barrier}


def gate_from_label(
    label: str, parameter: float | None = None, arity: int | None = None
) -> GateDef:
    """Return the standard gate with the given label.

    Args:
        label: Gate name as produced by str(gate) without the parameter.
        parameter: Angle for parametrized gates.
        arity: Qubit count for variadic gates (mcz, barrier).

    Raises:
        ValueError: If the label is unknown or the parameter/arity is missing.
    """
    if label in _FIXED_GATES:
        if parameter is not None:
            raise ValueError(f"Gate {label} takes no parameter.")
        return _FIXED_GATES[label]
    if label in _PARAMETRIZED_GATES:
        if parameter is None:
            raise ValueError(f"Gate {label} requires an angle.")
        return _PARAMETRIZED_GATES[label](parameter)
    if label in _VARIADIC_GATES:
        if arity is None:
            raise ValueError(f"Gate {label} requires an arity.")
        return _VARIADIC_GATES[label](arity)
    raise ValueError(f"Unknown gate: {label}")


def is_parametrized(label: str) -> bool:
    """Return whether gates with the given label carry an angle."""
    return label in _PARAMETRIZED_GATES


# ===== Angles =====


_PI_ANGLE_RE = re.compile(r"^(?P<sign>-)?(?:(?P<num>\d+)\*)?pi(?:/(?P<den>\d+))?$")


def format_angle(theta: float) -> str:
    """Return theta as an exact multiple of pi ("pi/8", "-3*pi/4") when it is one,
    otherwise as the shortest round-tripping float literal.
    """
    ratio = Fraction(theta / math.pi).limit_denominator(4096)
    if abs(float(ratio) * math.pi - theta) > 1e-12 * max(1.0, abs(theta)):
        return repr(float(theta))
    if ratio == 0:
        return "0"
    sign = "-" if ratio < 0 else ""
    num, den = abs(ratio.numerator), ratio.denominator
    head = "pi" if num == 1 else f"{num}*pi"
    return f"{sign}{head}" if den == 1 else f"{sign}{head}/{den}"


def parse_angle(text: str) -> float:
    """Inverse of format_angle; also accepts plain float literals.

    Raises:
        ValueError: If the text is neither a pi multiple nor a float.
    """
    text = text.strip().replace(" ", "")
    match = _PI_ANGLE_RE.match(text)
    if match is None:
        return float(text)
    num = int(match.group("num") or 1)
    den = int(match.group("den") or 1)
    if den == 0:
        raise ValueError(f"Invalid angle: {text}")
    value = num * math.pi / den
    return -value if match.group("sign") else value


# ===== Operations =====


def apply_gate(
    state: StateVector, gate: GateDef, targets: Iterable[int]
) -> StateVector:
    """Return the state obtained by applying gate to the given ordered qubits.

    Raises:
        ValueError: If the number of targets does not match the gate's arity, or
            a target is repeated or out of range.
    """
    targets = tuple(int(t) for t in targets)
    n = state.num_qubits
    if len(targets) != gate.arity:
        raise ValueError(
            f"Gate {gate.label} acts on {gate.arity} qubits, {len(targets)} given."
        )
    if len(set(targets)) != len(targets):
        raise ValueError(f"Repeated target qubit: {targets}")
    if any(t < 0 or t >= n for t in targets):
        raise ValueError(f"Target index out of range for {n} qubits: {targets}")
    if gate.directive:
        return state

    controls, subject = targets[: gate.num_controls], targets[gate.num_controls :]
    result = np.array(state.amplitudes).reshape((2,) * n)

    index = [slice(None)] * n
    for q in controls:
        index[_axis(n, q)] = 1
    index = tuple(index)
    block = result[index]

    # Axes of the block after the control axes are fixed
    remaining = [a for a in range(n) if isinstance(index[a], slice)]
    block_axes = [remaining.index(_axis(n, q)) for q in reversed(subject)]
    k = len(subject)
    updated = np.tensordot(
        gate.base.reshape((2,) * (2 * k)),
        block,
        axes=(list(range(k, 2 * k)), block_axes),
    )
    result[index] = np.moveaxis(updated, list(range(k)), block_axes)
    return StateVector._wrap(result.reshape(-1))


def probabilities(state: StateVector) -> np.ndarray:
    """Return |amplitude_k|^2 for every basis index k."""
    return np.abs(state.amplitudes) ** 2


def marginal_probabilities(state: StateVector, qubits: Sequence[int]) -> np.ndarray:
    """Return the outcome distribution of measuring only the given qubits.

    Entry j of the result has bit i of j equal to the value of qubits[i].

    Raises:
        ValueError: If a qubit is repeated or out of range.
    """
    n = state.num_qubits
    qubits = tuple(qubits)
    if len(set(qubits)) != len(qubits) or any(q < 0 or q >= n for q in qubits):
        raise ValueError(f"Invalid qubits for a {n}-qubit state: {qubits}")
    kept = [_axis(n, q) for q in reversed(qubits)]
    traced = [a for a in range(n) if a not in kept]
    table = probabilities(state).reshape((2,) * n).transpose(kept + traced)
    return table.reshape(1 << len(qubits), -1).sum(axis=1)


def sample_outcome(state: StateVector, rng: np.random.Generator) -> int:
    """Return a basis index drawn with probability |amplitude|^2.

    Raises:
        DegenerateStateError: If the state has (numerically) zero norm.
    """
    weights = probabilities(state)
    total = float(weights.sum())
    if total < DEGENERATE_NORM:
        raise DegenerateStateError("Cannot sample from a zero state.")
    return int(rng.choice(weights.shape[0], p=weights / total))


def fidelity(a: StateVector, b: StateVector) -> float:
    """Return |<a|b>|^2, clipped to [0, 1].

    Raises:
        ValueError: If the states have different numbers of qubits.
    """
    if a.num_qubits != b.num_qubits:
        raise ValueError(
            f"Dimension mismatch: {a.num_qubits} and {b.num_qubits} qubits."
        )
    overlap = abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2
    return float(min(1.0, max(0.0, overlap)))
