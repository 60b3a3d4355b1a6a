from __future__ import annotations

import functools
import logging
import math
from typing import Callable, Iterable, Sequence

import attrs
import numpy as np

from qjump.core import IDENTITY_MATRIX, Z_MATRIX, StateVector, qubit_count


"""This module evolves density matrices under the Lindblad master equation

    d rho / dt = -i [H, rho] + sum_i g_i (J_i rho J_i^+ - {J_i^+ J_i, rho} / 2)

with hbar = 1. It is the exact reference the trajectory engine is checked
against, so it favors predictability over speed: fixed-step classical RK4, with
the state re-Hermitized and renormalized after every step.
"""


HERMITIAN_TOLERANCE = 1e-9
HAMILTONIAN_TOLERANCE = 1e-10
TRACE_TOLERANCE = 1e-9
# Largest trace error of a single RK4 step before integration is aborted
TRACE_DRIFT_LIMIT = 1e-6
PSD_TOLERANCE = 1e-8

# Lowering operator: maps |1> to |0>
SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)

logger = logging.getLogger(__name__)


class TraceDriftError(ArithmeticError):
    """Raised when an integration step changes the trace by more than
    TRACE_DRIFT_LIMIT, which means the step size is far too large.
    """


def _max_deviation(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b), initial=0.0))


def _as_square(matrix, name: str) -> np.ndarray:
    matrix = np.array(matrix, dtype=complex)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"{name} must be a square matrix: {matrix.shape}")
    qubit_count(matrix.shape[0])
    matrix.flags.writeable = False
    return matrix


class DensityMatrix:
    """A mixed state of a register of qubits."""

    num_qubits: int
    entries: np.ndarray

    def __init__(self, entries: Iterable[Iterable[complex]]):
        """Initialize this state from its matrix.

        Raises:
            ValueError: If the matrix is not square with power-of-two dimension,
                not Hermitian, or does not have unit trace.
        """
        entries = _as_square(entries, "A density matrix")
        if _max_deviation(entries, entries.conj().T) > HERMITIAN_TOLERANCE:
            raise ValueError("A density matrix must be Hermitian.")
        trace = np.trace(entries)
        if abs(trace - 1) > TRACE_TOLERANCE:
            raise ValueError(f"A density matrix must have unit trace: {trace}")
        self.num_qubits = qubit_count(entries.shape[0])
        self.entries = entries

    @classmethod
    def _wrap(cls, entries: np.ndarray) -> DensityMatrix:
        rho = cls.__new__(cls)
        entries.flags.writeable = False
        rho.num_qubits = entries.shape[0].bit_length() - 1
        rho.entries = entries
        return rho

    @classmethod
    def from_state(cls, state: StateVector) -> DensityMatrix:
        """Return the projector |psi><psi| of a normalized pure state."""
        return cls(np.outer(state.amplitudes, state.amplitudes.conj()))

    def __repr__(self):
        return "DensityMatrix(num_qubits=%r,entries=%r)" % (
            self.num_qubits,
            self.entries,
        )

    def __eq__(self, other: DensityMatrix):
        return isinstance(other, DensityMatrix) and np.array_equal(
            self.entries, other.entries
        )

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def is_positive_semidefinite(self, tolerance: float = PSD_TOLERANCE) -> bool:
        return float(np.linalg.eigvalsh(self.entries).min()) >= -tolerance

    def populations(self) -> np.ndarray:
        """Return the diagonal, i.e. the computational-basis probabilities."""
        return np.real(np.diag(self.entries)).copy()


@attrs.frozen(eq=False)
class JumpChannel:
    """A jump operator J with its rate g >= 0."""

    operator: np.ndarray = attrs.field(
        converter=lambda m: _as_square(m, "A jump operator")
    )
    rate: float = attrs.field(converter=float, validator=attrs.validators.ge(0.0))


def _check_hamiltonian(instance, attribute, value):
    if _max_deviation(value, value.conj().T) > HAMILTONIAN_TOLERANCE:
        raise ValueError("The system Hamiltonian must be Hermitian.")


def _check_channels(instance, attribute, value):
    dim = instance.hamiltonian.shape[0]
    for channel in value:
        if channel.operator.shape[0] != dim:
            raise ValueError(
                f"Jump operator of dimension {channel.operator.shape[0]} "
                f"on a system of dimension {dim}."
            )


@attrs.frozen(eq=False)
class OpenSystem:
    """A Hamiltonian together with the jump channels coupling it to its
    environment.
    """

    hamiltonian: np.ndarray = attrs.field(
        converter=lambda m: _as_square(m, "A Hamiltonian"),
        validator=_check_hamiltonian,
    )
    channels: tuple[JumpChannel, ...] = attrs.field(
        default=(), converter=tuple, validator=_check_channels
    )

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    @property
    def num_qubits(self) -> int:
        return qubit_count(self.dim)

    def stacked(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return (J, J^dagger J, rates) with one leading axis entry per channel."""
        if not self.channels:
            empty = np.zeros((0, self.dim, self.dim), dtype=complex)
            return empty, empty, np.zeros(0)
        operators = np.stack([c.operator for c in self.channels])
        squares = operators.conj().transpose(0, 2, 1) @ operators
        rates = np.array([c.rate for c in self.channels])
        return operators, squares, rates


def _check_dimension(sys: OpenSystem, dim: int):
    if sys.dim != dim:
        raise ValueError(f"Dimension mismatch: system {sys.dim}, state {dim}.")


class _Generator:
    """The right-hand side of the master equation with the channel operators
    stacked once.
    """

    def __init__(self, sys: OpenSystem):
        self.hamiltonian = sys.hamiltonian
        self.operators, self.squares, self.rates = sys.stacked()
        self.adjoints = self.operators.conj().transpose(0, 2, 1)

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        derivative = -1j * (self.hamiltonian @ rho - rho @ self.hamiltonian)
        if self.rates.size:
            gains = self.operators @ rho @ self.adjoints
            losses = self.squares @ rho + rho @ self.squares
            derivative = derivative + np.tensordot(
                self.rates, gains - 0.5 * losses, axes=1
            )
        return derivative


# ===== Operations =====


def lindblad_rhs(sys: OpenSystem, rho: DensityMatrix) -> np.ndarray:
    """Return d rho / dt at rho. The result is traceless and Hermitian.

    Raises:
        ValueError: If the dimensions of the system and state differ.
    """
    _check_dimension(sys, rho.dim)
    return _Generator(sys)(rho.entries)


def step_count(t_final: float, dt: float) -> int:
    """Return the number of equal steps of size at most dt covering [0, t_final]."""
    if dt <= 0:
        raise ValueError(f"Step size must be positive: {dt}")
    if t_final < 0:
        raise ValueError(f"Final time must be non-negative: {t_final}")
    return math.ceil(t_final / dt - 1e-9)


def evolve(
    sys: OpenSystem,
    rho0: DensityMatrix,
    t_final: float,
    dt: float,
    observer: Callable[[float, DensityMatrix], None] | None = None,
) -> DensityMatrix:
    """Integrate the master equation from rho0 up to t_final with classical RK4.

    The interval is split into ceil(t_final / dt) equal steps. After every
    step the state is replaced by its Hermitian part and divided by its trace.

    Args:
        sys: The open system.
        rho0: The initial state.
        t_final: The final time, >= 0.
        dt: The largest step size, > 0.
        observer: Called with (t, rho) after every step.

    Raises:
        ValueError: If dt <= 0, t_final < 0 or the dimensions differ.
        TraceDriftError: If a step changes the trace by more than 1e-6.
    """
    _check_dimension(sys, rho0.dim)
    steps = step_count(t_final, dt)
    if steps == 0:
        return rho0
    h = t_final / steps
    logger.debug("RK4 over %d steps of %g", steps, h)

    rhs = _Generator(sys)
    rho = np.array(rho0.entries)
    for k in range(1, steps + 1):
        k1 = rhs(rho)
        k2 = rhs(rho + 0.5 * h * k1)
        k3 = rhs(rho + 0.5 * h * k2)
        k4 = rhs(rho + h * k3)
        rho = rho + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        rho = 0.5 * (rho + rho.conj().T)
        trace = float(np.real(np.trace(rho)))
        if not math.isfinite(trace) or abs(trace - 1) > TRACE_DRIFT_LIMIT:
            raise TraceDriftError(
                f"Trace drifted to {trace!r} at step {k} of {steps} (dt={h:g})."
            )
        rho = rho / trace
        if observer is not None:
            observer(k * h, DensityMatrix._wrap(rho.copy()))
    return DensityMatrix._wrap(rho)


def trace_distance(a: DensityMatrix, b: DensityMatrix) -> float:
    """Return 1/2 ||a - b||_1."""
    if a.dim != b.dim:
        raise ValueError(f"Dimension mismatch: {a.dim} and {b.dim}.")
    return 0.5 * float(np.abs(np.linalg.eigvalsh(a.entries - b.entries)).sum())


def purity(rho: DensityMatrix) -> float:
    """Return tr(rho^2)."""
    return float(np.real(np.vdot(rho.entries, rho.entries)))


def expectation(rho: DensityMatrix, observable: np.ndarray) -> float:
    """Return tr(rho O) for a Hermitian observable O."""
    observable = np.asarray(observable)
    if observable.shape != rho.entries.shape:
        raise ValueError(
            f"Dimension mismatch: {observable.shape} and {rho.entries.shape}."
        )
    return float(np.real(np.trace(rho.entries @ observable)))


# ===== Channels =====


def embed_operator(operator: np.ndarray, num_qubits: int, qubit: int) -> np.ndarray:
    """Return the single-qubit operator acting on the given qubit of a register."""
    if not 0 <= qubit < num_qubits:
        raise ValueError(f"Qubit out of range for {num_qubits} qubits: {qubit}")
    factors = [operator if q == qubit else IDENTITY_MATRIX for q in range(num_qubits)]
    return functools.reduce(np.kron, reversed(factors))


def amplitude_damping(num_qubits: int, qubit: int, rate: float) -> JumpChannel:
    """Return the decay channel |1> -> |0> of one qubit."""
    return JumpChannel(embed_operator(SIGMA_MINUS, num_qubits, qubit), rate)


def dephasing(num_qubits: int, qubit: int, rate: float) -> JumpChannel:
    """Return the Z dephasing channel of one qubit."""
    return JumpChannel(embed_operator(Z_MATRIX, num_qubits, qubit), rate)


def damped_system(
    num_qubits: int,
    rate: float,
    hamiltonian: np.ndarray | None = None,
    qubits: Sequence[int] | None = None,
) -> OpenSystem:
    """Return a system with amplitude damping on each of the given qubits
    (every qubit by default) and a zero Hamiltonian unless one is given.
    """
    dim = 1 << num_qubits
    if hamiltonian is None:
        hamiltonian = np.zeros((dim, dim), dtype=complex)
    qubits = range(num_qubits) if qubits is None else qubits
    return OpenSystem(
        hamiltonian, [amplitude_damping(num_qubits, q, rate) for q in qubits]
    )
