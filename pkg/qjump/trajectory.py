from __future__ import annotations

import functools
import logging
import math
from typing import Sequence

import attrs
import numpy as np

from qjump import parallel
from qjump.core import (
    DEGENERATE_NORM,
    X_MATRIX,
    Y_MATRIX,
    Z_MATRIX,
    StateVector,
)
from qjump.lindblad import (
    HAMILTONIAN_TOLERANCE,
    DensityMatrix,
    JumpChannel,
    OpenSystem,
    embed_operator,
    step_count,
)


"""This module implements the quantum jump (Monte Carlo wave function) method.

A trajectory is a pure state evolved in steps of size dt. At each step the jump
probabilities dp_i = dt g_i <psi|J_i^dagger J_i|psi> are computed and a single
uniform draw u picks the outcome: channel i when u falls in the i-th interval
of [0, dp), no jump when u >= dp. Without a jump the state is propagated to
first order by the effective Hamiltonian H_S - i/2 sum_i g_i J_i^dagger J_i;
with a jump it becomes J_i psi, normalized. The average of |psi><psi| over
many trajectories converges to the solution of the master equation.

Every trajectory draws from its own counter-based random stream, derived from
(seed, trajectory index), so results never depend on batching or on the number
of worker processes.
"""


# Largest total jump probability of a single step
MAX_JUMP_PROBABILITY = 0.1
# Uniform draws are taken from each stream in blocks of this many steps
DRAW_BLOCK = 256
# Most trajectories evolved together
BATCH_SIZE = 8192
# Most complex entries in the channel images of one batch step
MAX_BATCH_ELEMENTS = 1 << 22

logger = logging.getLogger(__name__)


class StepSizeError(ValueError):
    """Raised when the total jump probability of a step reaches
    MAX_JUMP_PROBABILITY, i.e. dt is too large for the channel rates.
    """


@attrs.frozen
class TrajectoryConfig:
    """Time grid, seed and ensemble size of a trajectory simulation."""

    dt: float = attrs.field(converter=float, validator=attrs.validators.gt(0.0))
    t_final: float = attrs.field(converter=float, validator=attrs.validators.ge(0.0))
    seed: int = attrs.field(
        default=0,
        validator=[attrs.validators.ge(0), attrs.validators.lt(1 << 64)],
    )
    num_trajectories: int = attrs.field(default=1, validator=attrs.validators.ge(1))

    @property
    def steps(self) -> int:
        return step_count(self.t_final, self.dt)

    @property
    def step_size(self) -> float:
        """The actual step, t_final / steps, which never exceeds dt."""
        steps = self.steps
        return self.t_final / steps if steps else self.dt


class EffectiveHamiltonian:
    """The non-Hermitian generator of the no-jump evolution."""

    matrix: np.ndarray

    def __init__(self, matrix: np.ndarray):
        """Raises:
        ValueError: If the anti-Hermitian part is not negative semidefinite.
        """
        matrix = np.array(matrix, dtype=complex)
        decay = 0.5j * (matrix - matrix.conj().T)
        if float(np.linalg.eigvalsh(decay).min(initial=0.0)) < -HAMILTONIAN_TOLERANCE:
            raise ValueError("The effective Hamiltonian must not amplify any state.")
        matrix.flags.writeable = False
        self.matrix = matrix

    def __repr__(self):
        return "EffectiveHamiltonian(matrix=%r)" % (self.matrix,)

    def __eq__(self, other: EffectiveHamiltonian):
        return isinstance(other, EffectiveHamiltonian) and np.array_equal(
            self.matrix, other.matrix
        )


@attrs.frozen(eq=False)
class TrajectoryResult:
    """The outcome of one trajectory. trace holds the amplitudes after every
    step (row 0 is the initial state) when recording was requested.
    """

    index: int
    final: StateVector
    jumps: int
    trace: np.ndarray | None = None


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    """Return the random stream of one trajectory."""
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,)))
    )


def effective_hamiltonian(sys: OpenSystem) -> EffectiveHamiltonian:
    """Return H = H_S - i/2 sum_i g_i J_i^dagger J_i."""
    _, squares, rates = sys.stacked()
    matrix = sys.hamiltonian - 0.5j * np.tensordot(rates, squares, axes=1)
    return EffectiveHamiltonian(matrix)


def _apply(matrix: np.ndarray, states: np.ndarray) -> np.ndarray:
    # Row-wise matrix-vector products whose rounding does not depend on the
    # number of rows.
    return (states[:, None, :] * matrix[None, :, :]).sum(axis=-1)


def _apply_stacked(matrices: np.ndarray, states: np.ndarray) -> np.ndarray:
    return (states[:, None, None, :] * matrices[None, :, :, :]).sum(axis=-1)


class _Kernel:
    """One time step applied to a batch of states, one row per trajectory."""

    def __init__(self, sys: OpenSystem, dt: float):
        operators, _, rates = sys.stacked()
        self.dt = dt
        self.operators = operators
        self.rates = rates
        self.propagator = np.eye(sys.dim) - 1j * dt * effective_hamiltonian(sys).matrix

    def jump_probabilities(self, states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return (dp, images): dp[b, i] for state b and channel i, and
        images[b, i] = J_i psi_b.
        """
        images = _apply_stacked(self.operators, states)
        dp = self.dt * self.rates * (np.abs(images) ** 2).sum(axis=-1)
        return dp, images

    def advance(
        self, states: np.ndarray, draws: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        """Return the states after one step and a mask of the rows that jumped."""
        dp, images = self.jump_probabilities(states)
        total = dp.sum(axis=1)
        worst = float(total.max(initial=0.0))
        if worst >= MAX_JUMP_PROBABILITY:
            raise StepSizeError(
                f"Jump probability {worst:.4g} per step; reduce dt below {self.dt:g}."
            )
        channel = (np.cumsum(dp, axis=1) <= draws[:, None]).sum(axis=1)
        jumped = channel < self.rates.size

        updated = np.empty_like(states)
        stay = ~jumped
        if stay.any():
            updated[stay] = _apply(self.propagator, states[stay]) / np.sqrt(
                1 - total[stay]
            )[:, None]
        if jumped.any():
            rows = np.flatnonzero(jumped)
            chosen = channel[rows]
            scale = np.sqrt(self.rates[chosen] * self.dt / dp[rows, chosen])
            updated[rows] = images[rows, chosen] * scale[:, None]
        norms = np.sqrt((np.abs(updated) ** 2).sum(axis=1))
        return updated / norms[:, None], jumped


def _initial_rows(
    initial: StateVector | DensityMatrix, rngs: list[np.random.Generator]
) -> np.ndarray:
    if isinstance(initial, StateVector):
        return np.tile(initial.amplitudes, (len(rngs), 1))
    # A mixed state is unravelled into its eigenvectors, weighted by eigenvalue
    weights, vectors = np.linalg.eigh(initial.entries)
    weights = np.clip(weights, 0.0, None)
    bounds = np.cumsum(weights / weights.sum())
    picks = [
        min(int(np.searchsorted(bounds, rng.random(), side="right")), bounds.size - 1)
        for rng in rngs
    ]
    return vectors[:, picks].T.copy()


def _run_batch(
    sys: OpenSystem,
    initial: StateVector | DensityMatrix,
    cfg: TrajectoryConfig,
    indices: Sequence[int],
    record: bool = False,
) -> list[TrajectoryResult]:
    if isinstance(initial, StateVector):
        dim = initial.amplitudes.shape[0]
    else:
        dim = initial.dim
    if dim != sys.dim:
        raise ValueError(f"Dimension mismatch: system {sys.dim}, state {dim}.")
    rngs = [trajectory_rng(cfg.seed, index) for index in indices]
    states = _initial_rows(initial, rngs)
    jumps = np.zeros(len(indices), dtype=int)
    kernel = _Kernel(sys, cfg.step_size)
    traces = [states.copy()] if record else None

    remaining = cfg.steps
    while remaining:
        block = min(DRAW_BLOCK, remaining)
        draws = np.stack([rng.random(block) for rng in rngs])
        for t in range(block):
            states, jumped = kernel.advance(states, draws[:, t])
            jumps += jumped
            if record:
                traces.append(states.copy())
        remaining -= block

    results = []
    for row, index in enumerate(indices):
        trace = None
        if record:
            trace = np.stack([frame[row] for frame in traces])
            trace.flags.writeable = False
        results.append(
            TrajectoryResult(
                index=index,
                final=StateVector._wrap(states[row].copy()),
                jumps=int(jumps[row]),
                trace=trace,
            )
        )
    return results


# ===== Operations =====


def jump_probabilities(
    state: StateVector, sys: OpenSystem, dt: float
) -> tuple[np.ndarray, float]:
    """Return (dp_i per channel, total dp) for one step of size dt.

    Raises:
        StepSizeError: If the total reaches MAX_JUMP_PROBABILITY.
    """
    if dt <= 0:
        raise ValueError(f"Step size must be positive: {dt}")
    dp, _ = _Kernel(sys, dt).jump_probabilities(state.amplitudes[None, :])
    dp = dp[0]
    total = float(dp.sum())
    if total >= MAX_JUMP_PROBABILITY:
        raise StepSizeError(
            f"Jump probability {total:.4g} per step; reduce dt below {dt:g}."
        )
    return dp, total


def step(
    state: StateVector, sys: OpenSystem, dt: float, rng: np.random.Generator
) -> StateVector:
    """Return the state after one jump-or-drift step, using one draw of rng.

    Raises:
        StepSizeError: If the total jump probability reaches MAX_JUMP_PROBABILITY.
    """
    if dt <= 0:
        raise ValueError(f"Step size must be positive: {dt}")
    if state.norm() ** 2 < DEGENERATE_NORM:
        raise ValueError("Cannot evolve a zero state.")
    states, _ = _Kernel(sys, dt).advance(
        state.amplitudes[None, :], np.array([rng.random()])
    )
    return StateVector._wrap(states[0])


def run_trajectory(
    sys: OpenSystem,
    psi0: StateVector | DensityMatrix,
    cfg: TrajectoryConfig,
    index: int = 0,
    record: bool = False,
) -> TrajectoryResult:
    """Evolve one trajectory from psi0 up to cfg.t_final.

    Args:
        sys: The open system.
        psi0: The initial pure state, or a mixed state whose eigenvector is
            drawn with the first number of the trajectory's stream.
        cfg: Step size, final time and seed.
        index: The trajectory index; (cfg.seed, index) determines the stream.
        record: Whether to keep the state after every step.

    Raises:
        StepSizeError: If some step has too large a jump probability.
    """
    return _run_batch(sys, psi0, cfg, [index], record)[0]


def batch_size(sys: OpenSystem) -> int:
    """Return how many trajectories of sys are evolved together, at most
    BATCH_SIZE and few enough that a step holds at most MAX_BATCH_ELEMENTS
    channel image entries.
    """
    per_trajectory = max(1, len(sys.channels)) * sys.dim * sys.dim
    return max(1, min(BATCH_SIZE, MAX_BATCH_ELEMENTS // per_trajectory))


def run_ensemble(
    sys: OpenSystem,
    initial: StateVector | DensityMatrix,
    cfg: TrajectoryConfig,
    workers: int | None = None,
) -> list[TrajectoryResult]:
    """Evolve trajectories 0..cfg.num_trajectories-1 in vectorized batches.

    The results equal those of run_trajectory for every index and do not
    depend on the number of workers.
    """
    batches = parallel.split_range(cfg.num_trajectories, batch_size(sys))
    logger.debug(
        "Running %d trajectories of %d steps in %d batches",
        cfg.num_trajectories,
        cfg.steps,
        len(batches),
    )
    task = functools.partial(_run_batch, sys, initial, cfg)
    parts = parallel.map_ordered(task, batches, workers)
    return [result for part in parts for result in part]


def _final_states(trajectories: Sequence[StateVector | TrajectoryResult]) -> np.ndarray:
    if not trajectories:
        raise ValueError("Empty ensemble.")
    states = [t.final if isinstance(t, TrajectoryResult) else t for t in trajectories]
    dims = {state.num_qubits for state in states}
    if len(dims) != 1:
        raise ValueError(
            f"Trajectories have different numbers of qubits: {sorted(dims)}"
        )
    return np.stack([state.amplitudes for state in states])


def ensemble_density(
    trajectories: Sequence[StateVector | TrajectoryResult],
) -> DensityMatrix:
    """Return (1/M) sum_i |psi_i><psi_i| over the final states, summed with
    exact rounding so that the order of the trajectories does not matter.

    Raises:
        ValueError: If the ensemble is empty or mixes dimensions.
    """
    amplitudes = _final_states(trajectories)
    count, dim = amplitudes.shape
    projectors = amplitudes[:, :, None] * amplitudes.conj()[:, None, :]
    rho = np.empty((dim, dim), dtype=complex)
    for i in range(dim):
        for j in range(dim):
            column = projectors[:, i, j]
            rho[i, j] = complex(math.fsum(column.real), math.fsum(column.imag)) / count
    return DensityMatrix(rho)


def estimate_observable(
    trajectories: Sequence[StateVector | TrajectoryResult], observable: np.ndarray
) -> tuple[float, float]:
    """Return the ensemble mean of <psi|O|psi> and its standard error.

    Raises:
        ValueError: If O is not Hermitian or fewer than two trajectories are given.
    """
    observable = np.asarray(observable, dtype=complex)
    asymmetry = np.max(np.abs(observable - observable.conj().T), initial=0.0)
    if asymmetry > HAMILTONIAN_TOLERANCE:
        raise ValueError("The observable must be Hermitian.")
    amplitudes = _final_states(trajectories)
    if amplitudes.shape[0] < 2:
        raise ValueError("A standard error needs at least two trajectories.")
    if observable.shape != (amplitudes.shape[1],) * 2:
        raise ValueError(
            f"Dimension mismatch: {observable.shape} and {amplitudes.shape[1]}."
        )
    values = np.real(
        np.einsum("mi,ij,mj->m", amplitudes.conj(), observable, amplitudes)
    )
    mean = math.fsum(values) / values.size
    return mean, float(np.std(values, ddof=1)) / math.sqrt(values.size)


_PAULI_JUMPS = {"x": X_MATRIX, "y": Y_MATRIX, "z": Z_MATRIX}


def pauli_jump_channels(
    num_qubits: int, rate: float, kinds: str = "xyz"
) -> list[JumpChannel]:
    """Return Pauli error channels on every qubit, each Pauli firing at the given
    rate. Error gates of the injection harness become continuous-time jumps.
    """
    if not kinds or set(kinds) - set(_PAULI_JUMPS):
        raise ValueError(f"Invalid Pauli kinds: {kinds!r}")
    return [
        JumpChannel(embed_operator(_PAULI_JUMPS[kind], num_qubits, q), rate)
        for q in range(num_qubits)
        for kind in kinds
    ]
