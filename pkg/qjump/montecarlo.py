from __future__ import annotations

import functools
import hashlib
import logging
import math
from collections import Counter
from typing import Iterator, Sequence

import attrs
import numpy as np

from qjump import parallel
from qjump.algorithms import ALGORITHMS, build_instance
from qjump.circuit import (
    GRID_ANGLES,
    UNIFORM_PLACEMENT,
    CircuitDag,
    ErrorSpec,
    depth,
    execute,
    inject_error,
    injectable_indices,
)
from qjump.core import X, Y, Z, GateDef, format_angle, rz


"""This module runs fault-injection experiments on the benchmark algorithms.

A case is one algorithm at one size with one kind of error. Every run of a case
draws the error gate and the nodes it follows, injects the errors into the
circuit, executes it and asks the algorithm's predicate whether the ideal
result survived. The success ratio over all runs, with its binomial standard
error, is the case's report.

The number of runs comes from the self-averaging bound f(sigma) = 1/(sigma^2 N):
a target standard error of 0.01 with N = 8 gives 1250 runs. Each run draws from
its own random stream, derived from (master seed, case id, run index), so
reports do not depend on the number of worker processes.
"""


DEFAULT_SIGMA = 0.01
DEFAULT_CAPACITY = 8
RUN_CHUNK = 64
PAULI_GATES = (X, Y, Z)

logger = logging.getLogger(__name__)


# ===== Statistics =====


def num_runs(sigma: float, n_capacity: float) -> int:
    """Return ceil(1 / (sigma^2 N)), the runs needed for a standard error sigma.

    Raises:
        ValueError: If sigma <= 0 or N < 1.
    """
    if sigma <= 0:
        raise ValueError(f"Target standard error must be positive: {sigma}")
    if n_capacity < 1:
        raise ValueError(f"Capacity N must be at least 1: {n_capacity}")
    return max(1, math.ceil(1 / (sigma**2 * n_capacity) - 1e-9))


def binomial_stderr(successes: int, runs: int) -> float:
    """Return 100 sqrt(p (1 - p) / runs) with p = successes / runs, in percent.

    Raises:
        ValueError: If runs < 1 or successes is not in [0, runs].
    """
    if runs < 1:
        raise ValueError(f"Invalid number of runs: {runs}")
    if not 0 <= successes <= runs:
        raise ValueError(f"Invalid number of successes: {successes} of {runs}")
    p = successes / runs
    return 100 * math.sqrt(p * (1 - p) / runs)


# ===== Records =====


def _check_algorithm(instance, attribute, value):
    if value not in ALGORITHMS:
        raise ValueError(f"Unknown algorithm: {value}")


@attrs.frozen
class ExperimentSpec:
    """One cell of the experiment grid."""

    algorithm: str = attrs.field(validator=_check_algorithm)
    num_qubits: int = attrs.field(validator=attrs.validators.ge(1))
    error: ErrorSpec
    sigma_target: float = attrs.field(
        default=DEFAULT_SIGMA,
        converter=float,
        validator=[attrs.validators.gt(0.0), attrs.validators.le(1.0)],
    )
    capacity_n: int = attrs.field(
        default=DEFAULT_CAPACITY, validator=attrs.validators.ge(1)
    )
    master_seed: int = attrs.field(
        default=0, validator=[attrs.validators.ge(0), attrs.validators.lt(1 << 64)]
    )
    runs_override: int | None = attrs.field(
        default=None,
        validator=attrs.validators.optional(attrs.validators.ge(1)),
    )

    @property
    def runs(self) -> int:
        if self.runs_override is not None:
            return self.runs_override
        return num_runs(self.sigma_target, self.capacity_n)

    @property
    def case_id(self) -> int:
        """A 32-bit identifier of the cell, independent of the seed and of the
        number of runs.
        """
        placement = self.error.placement
        if placement != UNIFORM_PLACEMENT:
            placement = ",".join(str(i) for i in placement)
        key = "|".join(
            [
                self.algorithm,
                str(self.num_qubits),
                self.error.kind,
                self.error.angle_label,
                str(self.error.count),
                placement,
            ]
        )
        return int.from_bytes(hashlib.sha256(key.encode()).digest()[:4], "big")


def _check_successes(instance, attribute, value):
    if not 0 <= value <= instance.runs:
        raise ValueError(f"Invalid number of successes: {value} of {instance.runs}")


@attrs.frozen
class SuccessReport:
    """The measured success ratio of one experiment cell."""

    algorithm: str
    num_qubits: int
    depth: int
    error_kind: str
    angle: float | None
    error_count: int
    runs: int = attrs.field(validator=attrs.validators.ge(1))
    successes: int = attrs.field(validator=_check_successes)
    seed: int
    # drawn gate label -> (runs, successes)
    by_kind: dict[str, tuple[int, int]] = attrs.field(factory=dict, eq=False)

    @property
    def success_pct(self) -> float:
        return 100 * self.successes / self.runs

    @property
    def stderr_pct(self) -> float:
        return binomial_stderr(self.successes, self.runs)

    @property
    def angle_label(self) -> str:
        return "" if self.angle is None else format_angle(self.angle)


# ===== Runs =====


def run_rng(master_seed: int, case_id: int, run: int) -> np.random.Generator:
    """Return the random stream of one run of one case."""
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(master_seed, spawn_key=(case_id, run)))
    )


def draw_error_gate(error: ErrorSpec, rng: np.random.Generator) -> GateDef:
    """Return the gate injected by one run; Pauli errors draw X, Y or Z uniformly."""
    if error.kind == "pauli":
        return PAULI_GATES[int(rng.integers(len(PAULI_GATES)))]
    if error.kind == "rz":
        return rz(error.angle)
    return {"x": X, "y": Y, "z": Z}[error.kind]


def place_errors(
    dag: CircuitDag, error: ErrorSpec, rng: np.random.Generator
) -> list[int]:
    """Return the op_nodes indices the errors of one run follow.

    Uniform placement draws error.count injectable nodes independently, with
    replacement; an explicit placement is returned as given.

    Raises:
        ValueError: If the circuit has no injectable node, or an explicit index
            is not injectable.
    """
    candidates = injectable_indices(dag)
    if not candidates:
        raise ValueError("Cannot place errors in an empty circuit.")
    if error.placement != UNIFORM_PLACEMENT:
        invalid = set(error.placement) - set(candidates)
        if invalid:
            raise ValueError(f"Not injectable node indices: {sorted(invalid)}")
        return list(error.placement)
    picks = rng.integers(len(candidates), size=error.count)
    return [candidates[int(p)] for p in picks]


def inject_all(dag: CircuitDag, gate: GateDef, indices: Sequence[int]) -> CircuitDag:
    """Inject the gate after each of the given nodes, the highest index first."""
    for index in sorted(indices, reverse=True):
        dag = inject_error(dag, gate, index)
    return dag


def _run_chunk(spec: ExperimentSpec, runs: range) -> list[tuple[str, bool]]:
    instance = build_instance(spec.algorithm, spec.num_qubits, spec.master_seed)
    ideal = instance.ideal_state()
    case_id = spec.case_id
    outcomes = []
    for run in runs:
        rng = run_rng(spec.master_seed, case_id, run)
        dag = instance.dag
        label = spec.error.kind
        if spec.error.count:
            gate = draw_error_gate(spec.error, rng)
            label = gate.label
            dag = inject_all(dag, gate, place_errors(dag, spec.error, rng))
        final = execute(dag, instance.initial)
        outcomes.append((label, bool(instance.predicate(final, ideal))))
    return outcomes


def run_case(spec: ExperimentSpec, workers: int | None = None) -> SuccessReport:
    """Run every run of a case and return its success report.

    Raises:
        ValueError: If the algorithm is unknown or the circuit has no node to
            inject into.
    """
    instance = build_instance(spec.algorithm, spec.num_qubits, spec.master_seed)
    if spec.error.count and not injectable_indices(instance.dag):
        raise ValueError(f"{instance.name} circuit has no injectable node.")
    runs = spec.runs
    logger.info(
        "Case %s q=%d error=%s%s x%d: %d runs",
        spec.algorithm,
        instance.num_qubits,
        spec.error.kind,
        f"({spec.error.angle_label})" if spec.error.angle is not None else "",
        spec.error.count,
        runs,
    )

    task = functools.partial(_run_chunk, spec)
    parts = parallel.map_ordered(task, parallel.split_range(runs, RUN_CHUNK), workers)
    outcomes = [outcome for part in parts for outcome in part]

    totals, wins = Counter(), Counter()
    for label, success in outcomes:
        totals[label] += 1
        wins[label] += success
    successes = sum(wins.values())
    report = SuccessReport(
        algorithm=spec.algorithm,
        num_qubits=instance.num_qubits,
        depth=depth(instance.dag),
        error_kind=spec.error.kind,
        angle=spec.error.angle,
        error_count=spec.error.count,
        runs=runs,
        successes=successes,
        seed=spec.master_seed,
        by_kind={label: (totals[label], wins[label]) for label in sorted(totals)},
    )
    logger.info(
        "Case %s q=%d: %d/%d successes (%.1f%%)",
        spec.algorithm,
        report.num_qubits,
        successes,
        runs,
        report.success_pct,
    )
    return report


# ===== Sweeps =====


@attrs.frozen
class SweepGrid:
    """Algorithms with their sizes, crossed with error settings."""

    # (algorithm, sizes) pairs
    cells: tuple[tuple[str, tuple[int, ...]], ...] = attrs.field(
        converter=lambda cells: tuple((a, tuple(sizes)) for a, sizes in cells)
    )
    errors: tuple[ErrorSpec, ...] = attrs.field(converter=tuple)
    sigma_target: float = DEFAULT_SIGMA
    capacity_n: int = DEFAULT_CAPACITY
    runs_override: int | None = None

    def specs(self, master_seed: int) -> Iterator[ExperimentSpec]:
        for algorithm, sizes in self.cells:
            for size in sizes:
                for error in self.errors:
                    yield ExperimentSpec(
                        algorithm=algorithm,
                        num_qubits=size,
                        error=error,
                        sigma_target=self.sigma_target,
                        capacity_n=self.capacity_n,
                        master_seed=master_seed,
                        runs_override=self.runs_override,
                    )


PAULI_SIZES = (3, 5, 7, 11)
SMALL_SIZES = (3, 5, 7)
_SMALL_ALGORITHMS = ("qpe", "eoh")


def grid_errors(
    kind: str, count: int = 1, angles: Sequence[float] | None = None
) -> tuple[ErrorSpec, ...]:
    """Return the error columns of a sweep: one spec, or one per angle for rz
    (all five grid angles by default).
    """
    if kind != "rz":
        return (ErrorSpec(kind, count),)
    if angles is None:
        angles = list(GRID_ANGLES.values())
    return tuple(ErrorSpec("rz", count, angle) for angle in angles)


def default_grid(
    kind: str = "pauli",
    count: int = 1,
    include_nine: bool = False,
    algorithms: Sequence[str] | None = None,
    angles: Sequence[float] | None = None,
    sigma_target: float = DEFAULT_SIGMA,
    capacity_n: int = DEFAULT_CAPACITY,
    runs_override: int | None = None,
) -> SweepGrid:
    """Return the default grid: sizes 3, 5, 7 and 11 (plus 9 on request) for
    Deutsch-Jozsa, Bernstein-Vazirani, Grover and Simon; 3, 5 and 7 for QPE
    and EOH.
    """
    algorithms = list(ALGORITHMS) if algorithms is None else list(algorithms)
    for algorithm in algorithms:
        if algorithm not in ALGORITHMS:
            raise ValueError(f"Unknown algorithm: {algorithm}")
    cells = []
    for algorithm in algorithms:
        sizes = SMALL_SIZES if algorithm in _SMALL_ALGORITHMS else PAULI_SIZES
        if include_nine and algorithm not in _SMALL_ALGORITHMS:
            sizes = tuple(sorted(sizes + (9,)))
        cells.append((algorithm, sizes))
    return SweepGrid(
        cells=cells,
        errors=grid_errors(kind, count, angles),
        sigma_target=sigma_target,
        capacity_n=capacity_n,
        runs_override=runs_override,
    )


def sweep(
    grid: SweepGrid, master_seed: int, workers: int | None = None
) -> list[SuccessReport]:
    """Run every cell of the grid, in grid order."""
    specs = list(grid.specs(master_seed))
    reports = []
    for number, spec in enumerate(specs, start=1):
        reports.append(run_case(spec, workers))
        logger.info("Sweep progress: %d/%d cells", number, len(specs))
    return reports
