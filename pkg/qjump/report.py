from __future__ import annotations

import csv
import io
import json
import logging
import math
import sys
from typing import Sequence

import attrs
import click
import numpy as np
from scipy.stats import spearmanr

from qjump.algorithms import ALGORITHMS, build_instance
from qjump.circuit import ERROR_KINDS, GRID_ANGLES, ErrorSpec, dump_circuit
from qjump.core import StateVector, parse_angle
from qjump.lindblad import DensityMatrix, damped_system, evolve, trace_distance
from qjump.montecarlo import (
    DEFAULT_CAPACITY,
    DEFAULT_SIGMA,
    ExperimentSpec,
    SuccessReport,
    SweepGrid,
    default_grid,
    grid_errors,
    run_case,
    sweep,
)
from qjump.trajectory import (
    TrajectoryConfig,
    ensemble_density,
    estimate_observable,
    run_ensemble,
)


"""This module is the command line of qjump and renders experiment results.

Commands:
    case           run one experiment cell
    sweep          run a grid of cells
    equivalence    compare trajectory ensembles with the master equation
    dump-circuit   print a benchmark circuit in the line format

Every command accepts --config PATH, a JSON object keyed by long option names,
whose values are overridden by options given on the command line.
"""


COMMANDS = ("case", "sweep", "equivalence", "dump-circuit")
FORMATS = ("csv", "json", "table")
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")
CSV_COLUMNS = (
    "algorithm",
    "qubits",
    "depth",
    "error_kind",
    "angle",
    "error_count",
    "runs",
    "successes",
    "success_pct",
    "stderr_pct",
    "seed",
)
EQUIVALENCE_COLUMNS = (
    "dt",
    "trajectories",
    "trace_distance",
    "population",
    "population_stderr",
    "reference_population",
    "seed",
)
DEPTH_NOTE = "# depth: longest gate path of the circuits built here"
DEFAULT_DTS = (1e-2, 5e-3, 1e-3)
DEFAULT_TRAJECTORIES = (1, 100, 1000, 10000)
REFERENCE_DT = 1e-3

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Raised when the command line or config file is invalid."""


# ===== Configuration =====


def _float_tuple(value):
    return tuple(float(a) for a in value)


@attrs.frozen
class RunConfig:
    """A validated command invocation."""

    command: str = attrs.field(validator=attrs.validators.in_(COMMANDS))
    algorithms: tuple[str, ...] = attrs.field(default=(), converter=tuple)
    qubits: tuple[int, ...] = attrs.field(default=(), converter=tuple)
    error: str = attrs.field(
        default="pauli", validator=attrs.validators.in_(ERROR_KINDS)
    )
    angles: tuple[float, ...] = attrs.field(default=(), converter=_float_tuple)
    count: int = attrs.field(default=1, validator=attrs.validators.in_((0, 1, 2)))
    free_angle: bool = False
    include_nine: bool = False
    sigma: float = attrs.field(
        default=DEFAULT_SIGMA,
        validator=[attrs.validators.gt(0.0), attrs.validators.le(1.0)],
    )
    capacity_n: int = attrs.field(
        default=DEFAULT_CAPACITY, validator=attrs.validators.ge(1)
    )
    runs: int | None = attrs.field(
        default=None, validator=attrs.validators.optional(attrs.validators.ge(1))
    )
    seed: int = attrs.field(
        default=0, validator=[attrs.validators.ge(0), attrs.validators.lt(1 << 64)]
    )
    output_format: str = attrs.field(
        default="csv", validator=attrs.validators.in_(FORMATS)
    )
    out: str | None = None
    workers: int | None = None
    log_level: str = attrs.field(
        default="WARNING", validator=attrs.validators.in_(LOG_LEVELS)
    )
    dts: tuple[float, ...] = attrs.field(default=(), converter=_float_tuple)
    trajectories: tuple[int, ...] = attrs.field(default=(), converter=tuple)
    rate: float = 1.0
    t_final: float = 1.0

    def __attrs_post_init__(self):
        for algorithm in self.algorithms:
            if algorithm not in ALGORITHMS:
                raise ValueError(f"Unknown algorithm: {algorithm}")
        if self.command in ("case", "dump-circuit"):
            if len(self.algorithms) != 1 or len(self.qubits) != 1:
                raise ValueError(
                    f"{self.command} needs one --algorithm and one --qubits."
                )
        if self.command in ("case", "sweep"):
            self.error_specs()

    def error_specs(self) -> tuple[ErrorSpec, ...]:
        """Return the error columns named by --error, --angle(s) and --count.

        Raises:
            ValueError: If an angle is missing, superfluous or off the grid.
        """
        if self.error != "rz":
            if self.angles:
                raise ValueError(f"--error {self.error} takes no angle.")
            return (ErrorSpec(self.error, self.count),)
        if not self.angles:
            if self.command == "case":
                raise ValueError("--error rz requires --angle.")
            return grid_errors("rz", self.count)
        return tuple(
            ErrorSpec("rz", self.count, angle, free_angle=self.free_angle)
            for angle in self.angles
        )


class AngleType(click.ParamType):
    """An angle as a pi multiple ("pi/8") or a float."""

    name = "angle"

    def convert(self, value, param, ctx):
        if isinstance(value, float):
            return value
        try:
            return parse_angle(str(value))
        except ValueError:
            self.fail(f"{value!r} is not an angle", param, ctx)


class AngleListType(click.ParamType):
    """A comma-separated angle list, or "all" for every grid angle."""

    name = "angles"

    def convert(self, value, param, ctx):
        if isinstance(value, (list, tuple)):
            return tuple(AngleType().convert(v, param, ctx) for v in value)
        if str(value).strip() == "all":
            return tuple(GRID_ANGLES.values())
        return tuple(AngleType().convert(v, param, ctx) for v in str(value).split(","))


def _build_config(**fields) -> RunConfig:
    try:
        return RunConfig(**fields)
    except ValueError as e:
        raise click.UsageError(str(e))


def _run_options(function):
    for decorator in reversed(
        [
            click.option(
                "--seed", type=click.IntRange(min=0), default=0, show_default=True
            ),
            click.option(
                "--format",
                "output_format",
                type=click.Choice(FORMATS),
                default="csv",
                show_default=True,
            ),
            click.option("--out", type=click.Path(dir_okay=False), default=None),
            click.option("--workers", type=click.IntRange(min=1), default=None),
        ]
    ):
        function = decorator(function)
    return function


def _error_options(function):
    for decorator in reversed(
        [
            click.option(
                "--error",
                type=click.Choice(ERROR_KINDS),
                default="pauli",
                show_default=True,
            ),
            click.option(
                "--count", type=click.IntRange(0, 2), default=1, show_default=True
            ),
            click.option(
                "--free-angle", is_flag=True, help="Accept angles off the grid."
            ),
            click.option(
                "--sigma", type=float, default=DEFAULT_SIGMA, show_default=True
            ),
            click.option(
                "--capacity-n",
                type=click.IntRange(min=1),
                default=DEFAULT_CAPACITY,
                show_default=True,
            ),
            click.option(
                "--runs",
                type=click.IntRange(min=1),
                default=None,
                help="Override the run count.",
            ),
        ]
    ):
        function = decorator(function)
    return function


def _option_names(command: click.Command) -> dict[str, str]:
    """Map every spelling of a command's long options to the parameter name."""
    names = {}
    for param in command.params:
        for opt in param.opts:
            if opt.startswith("--"):
                key = opt[2:]
                names[key] = param.name
                names[key.replace("-", "_")] = param.name
    return names


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option(
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    help="JSON file of option values.",
)
@click.option("-v", "--verbose", is_flag=True, help="Log at DEBUG level.")
@click.option(
    "--log-level", type=click.Choice(LOG_LEVELS, case_sensitive=False), default=None
)
@click.pass_context
def cli(ctx, config_path, verbose, log_level):
    """Quantum jump simulation and fault-injection experiments."""
    ctx.ensure_object(dict)
    ctx.obj["log_level"] = (log_level or ("DEBUG" if verbose else "WARNING")).upper()
    if config_path is None or ctx.invoked_subcommand is None:
        return
    with open(config_path) as f:
        try:
            values = json.load(f)
        except json.JSONDecodeError as e:
            raise click.BadParameter(f"invalid JSON: {e}", param_hint="--config")
    if not isinstance(values, dict):
        raise click.BadParameter("must hold a JSON object", param_hint="--config")
    names = _option_names(cli.commands[ctx.invoked_subcommand])
    unknown = sorted(set(values) - set(names))
    if unknown:
        raise click.BadParameter(
            f"unknown keys {', '.join(unknown)}", param_hint="--config"
        )
    ctx.default_map = {ctx.invoked_subcommand: {names[k]: v for k, v in values.items()}}


@cli.command()
@click.option("--algorithm", type=click.Choice(list(ALGORITHMS)), required=True)
@click.option("--qubits", type=click.IntRange(min=1), required=True)
@click.option("--angle", type=AngleType(), default=None)
@_error_options
@_run_options
@click.pass_context
def case(ctx, algorithm, qubits, angle, **options):
    """Run one experiment cell."""
    return _build_config(
        command="case",
        algorithms=(algorithm,),
        qubits=(qubits,),
        angles=() if angle is None else (angle,),
        log_level=ctx.obj["log_level"],
        **options,
    )


@cli.command(name="sweep")
@click.option(
    "--algorithm", "algorithms", type=click.Choice(list(ALGORITHMS)), multiple=True
)
@click.option(
    "--qubits",
    type=click.IntRange(min=1),
    multiple=True,
    help="Override the grid sizes.",
)
@click.option(
    "--angles", type=AngleListType(), default=None, help='Comma list or "all".'
)
@click.option("--include-nine", is_flag=True, help="Add size 9 to the grid.")
@_error_options
@_run_options
@click.pass_context
def sweep_command(ctx, algorithms, qubits, angles, **options):
    """Run a grid of experiment cells."""
    return _build_config(
        command="sweep",
        algorithms=algorithms,
        qubits=qubits,
        angles=angles or (),
        log_level=ctx.obj["log_level"],
        **options,
    )


@cli.command()
@click.option("--dt", "dts", type=float, multiple=True, help="Step sizes.")
@click.option(
    "--trajectories",
    type=click.IntRange(min=1),
    multiple=True,
    help="Ensemble sizes.",
)
@click.option("--rate", type=float, default=1.0, show_default=True)
@click.option("--t-final", type=float, default=1.0, show_default=True)
@_run_options
@click.pass_context
def equivalence(ctx, dts, trajectories, rate, t_final, **options):
    """Compare trajectory ensembles with the master equation under damping."""
    return _build_config(
        command="equivalence",
        dts=dts or DEFAULT_DTS,
        trajectories=trajectories or DEFAULT_TRAJECTORIES,
        rate=rate,
        t_final=t_final,
        log_level=ctx.obj["log_level"],
        **options,
    )


@cli.command(name="dump-circuit")
@click.option("--algorithm", type=click.Choice(list(ALGORITHMS)), required=True)
@click.option("--qubits", type=click.IntRange(min=1), required=True)
@click.option("--seed", type=click.IntRange(min=0), default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_context
def dump_circuit_command(ctx, algorithm, qubits, seed, out):
    """Print a benchmark circuit, one node per line."""
    return _build_config(
        command="dump-circuit",
        algorithms=(algorithm,),
        qubits=(qubits,),
        seed=seed,
        out=out,
        log_level=ctx.obj["log_level"],
    )


def parse_config(argv: Sequence[str] | None = None) -> RunConfig | None:
    """Return the RunConfig of a command line, or None when only help was shown.

    Raises:
        ConfigError: If the command line or the config file is invalid.
    """
    args = sys.argv[1:] if argv is None else list(argv)
    try:
        result = cli.main(args=args, prog_name="qjump", standalone_mode=False)
    except click.ClickException as e:
        raise ConfigError(e.format_message()) from e
    except click.exceptions.Abort as e:
        raise ConfigError("aborted") from e
    return result if isinstance(result, RunConfig) else None


# ===== Rendering =====


def _csv_text(
    columns: Sequence[str], records: list[dict], comment: str | None = None
) -> str:
    buffer = io.StringIO()
    if comment:
        buffer.write(comment + "\n")
    writer = csv.DictWriter(buffer, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    writer.writerows(records)
    return buffer.getvalue()


def report_record(report: SuccessReport) -> dict:
    """Return the CSV fields of a report."""
    return {
        "algorithm": report.algorithm,
        "qubits": report.num_qubits,
        "depth": report.depth,
        "error_kind": report.error_kind,
        "angle": report.angle_label,
        "error_count": report.error_count,
        "runs": report.runs,
        "successes": report.successes,
        "success_pct": f"{report.success_pct:.2f}",
        "stderr_pct": f"{report.stderr_pct:.2f}",
        "seed": report.seed,
    }


def format_cell(success_pct: float, stderr_pct: float) -> str:
    """Return a table cell such as "(21.0, 4.07)"."""
    return f"({success_pct:.1f}, {stderr_pct:.2f})"


def _column_label(report: SuccessReport) -> str:
    if report.angle is None:
        label = report.error_kind
    else:
        label = f"{report.error_kind} {report.angle_label}"
    return f"{label} x{report.error_count}"


def render_table(rows: Sequence[SuccessReport]) -> str:
    """Return the reports as a grid: one line per "Algorithm (qubits, depth)"
    and one column per error configuration.
    """
    lines, columns, cells = [], [], {}
    for report in rows:
        line = f"{ALGORITHMS[report.algorithm]} ({report.num_qubits}, {report.depth})"
        column = _column_label(report)
        if line not in lines:
            lines.append(line)
        if column not in columns:
            columns.append(column)
        cells[line, column] = format_cell(report.success_pct, report.stderr_pct)

    table = [["Algorithm (qubits, depth)"] + columns]
    table.extend(
        [line] + [cells.get((line, c), "-") for c in columns] for line in lines
    )
    widths = [max(len(row[i]) for row in table) for i in range(len(table[0]))]
    return "".join(
        "  ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip() + "\n"
        for row in table
    )


def format_rows(rows: Sequence[SuccessReport], fmt: str = "csv") -> str:
    """Return the reports rendered as csv, json or table text."""
    if fmt == "csv":
        return _csv_text(CSV_COLUMNS, [report_record(r) for r in rows], DEPTH_NOTE)
    if fmt == "json":
        records = []
        for report in rows:
            record = report_record(report)
            record["by_kind"] = {
                label: {"runs": runs, "successes": successes}
                for label, (runs, successes) in report.by_kind.items()
            }
            records.append(record)
        return json.dumps(records, indent=2) + "\n"
    if fmt == "table":
        return render_table(rows)
    raise ValueError(f"Unknown format: {fmt}")


def _write(text: str, out: str | None):
    with click.open_file(out or "-", "w") as f:
        f.write(text)


def emit(rows: Sequence[SuccessReport], fmt: str = "csv", out: str | None = None):
    """Write the reports to the given path, or to stdout.

    Raises:
        OSError: If the path cannot be written.
    """
    _write(format_rows(rows, fmt), out)


def read_csv(text: str) -> list[SuccessReport]:
    """Given CSV text produced by emit, return its reports.

    Raises:
        ValueError: If the header or a row is invalid.
    """
    lines = [line for line in text.splitlines() if not line.startswith("#")]
    reader = csv.DictReader(lines)
    if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
        raise ValueError(f"Unexpected CSV header: {reader.fieldnames}")
    reports = []
    for record in reader:
        reports.append(
            SuccessReport(
                algorithm=record["algorithm"],
                num_qubits=int(record["qubits"]),
                depth=int(record["depth"]),
                error_kind=record["error_kind"],
                angle=parse_angle(record["angle"]) if record["angle"] else None,
                error_count=int(record["error_count"]),
                runs=int(record["runs"]),
                successes=int(record["successes"]),
                seed=int(record["seed"]),
            )
        )
    return reports


def trend_statistic(rows: Sequence[SuccessReport]) -> dict[str, float]:
    """Return, per algorithm, the Spearman correlation between qubit count and
    success_pct. It is nan when either varies too little to rank.
    """
    by_algorithm = {}
    for report in rows:
        by_algorithm.setdefault(report.algorithm, []).append(report)
    trends = {}
    for algorithm, reports in by_algorithm.items():
        qubits = [r.num_qubits for r in reports]
        success = [r.success_pct for r in reports]
        if len(set(qubits)) < 2 or len(set(success)) < 2:
            trends[algorithm] = math.nan
            continue
        trends[algorithm] = float(spearmanr(qubits, success)[0])
    return trends


# ===== Equivalence =====


@attrs.frozen
class EquivalenceRow:
    """Distance between a trajectory ensemble and the master equation."""

    dt: float
    trajectories: int
    trace_distance: float
    population: float
    population_stderr: float
    reference_population: float
    seed: int


def equivalence_report(
    dts: Sequence[float],
    trajectory_counts: Sequence[int],
    rate: float = 1.0,
    t_final: float = 1.0,
    seed: int = 0,
    workers: int | None = None,
) -> list[EquivalenceRow]:
    """Return one row per (dt, M) for a decaying qubit started in |1>.

    For each dt a single ensemble of the largest M is run; smaller ensembles are
    its first M trajectories. The reference is the RK4 solution at dt = 1e-3.
    """
    system = damped_system(1, rate)
    psi0 = StateVector.basis(1, 1)
    excited = np.diag([0.0, 1.0])
    reference = evolve(system, DensityMatrix.from_state(psi0), t_final, REFERENCE_DT)
    reference_population = float(np.real(reference.entries[1, 1]))

    counts = sorted(set(trajectory_counts))
    rows = []
    for dt in dts:
        cfg = TrajectoryConfig(
            dt=dt, t_final=t_final, seed=seed, num_trajectories=max(counts)
        )
        results = run_ensemble(system, psi0, cfg, workers)
        for m in counts:
            ensemble = results[:m]
            rho = ensemble_density(ensemble)
            if m >= 2:
                population, stderr = estimate_observable(ensemble, excited)
            else:
                population, stderr = float(np.real(rho.entries[1, 1])), math.nan
            rows.append(
                EquivalenceRow(
                    dt=dt,
                    trajectories=m,
                    trace_distance=trace_distance(rho, reference),
                    population=population,
                    population_stderr=stderr,
                    reference_population=reference_population,
                    seed=seed,
                )
            )
            logger.info(
                "Equivalence dt=%g M=%d: distance %.4g",
                dt,
                m,
                rows[-1].trace_distance,
            )
    return rows


def format_equivalence(rows: Sequence[EquivalenceRow], fmt: str = "csv") -> str:
    """Return equivalence rows rendered as csv, json or table text."""
    records = [attrs.asdict(row) for row in rows]
    if fmt == "csv":
        return _csv_text(EQUIVALENCE_COLUMNS, records)
    if fmt == "json":
        # nan is not valid JSON
        for record in records:
            for key, value in record.items():
                if isinstance(value, float) and math.isnan(value):
                    record[key] = None
        return json.dumps(records, indent=2) + "\n"
    if fmt == "table":
        header = f"{'dt':>10}  {'M':>7}  {'distance':>10}  {'population':>18}"
        lines = [header]
        for row in rows:
            population = f"{row.population:.4f}"
            if not math.isnan(row.population_stderr):
                population += f" +- {row.population_stderr:.4f}"
            lines.append(
                f"{row.dt:>10g}  {row.trajectories:>7d}  "
                f"{row.trace_distance:>10.4f}  {population:>18}"
            )
        return "\n".join(lines) + "\n"
    raise ValueError(f"Unknown format: {fmt}")


def emit_equivalence(
    rows: Sequence[EquivalenceRow], fmt: str = "csv", out: str | None = None
):
    _write(format_equivalence(rows, fmt), out)


# ===== Entry Point =====


def _sweep_grid(config: RunConfig) -> SweepGrid:
    errors = config.error_specs()
    if config.qubits:
        algorithms = config.algorithms or tuple(ALGORITHMS)
        return SweepGrid(
            cells=[(a, config.qubits) for a in algorithms],
            errors=errors,
            sigma_target=config.sigma,
            capacity_n=config.capacity_n,
            runs_override=config.runs,
        )
    grid = default_grid(
        include_nine=config.include_nine,
        algorithms=config.algorithms or None,
        sigma_target=config.sigma,
        capacity_n=config.capacity_n,
        runs_override=config.runs,
    )
    return attrs.evolve(grid, errors=errors)


def run(config: RunConfig) -> list:
    """Execute a command and write its output. Returns the emitted rows (the
    dumped text for dump-circuit).
    """
    if config.command == "dump-circuit":
        instance = build_instance(config.algorithms[0], config.qubits[0], config.seed)
        text = dump_circuit(instance.dag)
        _write(text, config.out)
        return [text]
    if config.command == "equivalence":
        rows = equivalence_report(
            config.dts,
            config.trajectories,
            rate=config.rate,
            t_final=config.t_final,
            seed=config.seed,
            workers=config.workers,
        )
        emit_equivalence(rows, config.output_format, config.out)
        return rows
    if config.command == "case":
        spec = ExperimentSpec(
            algorithm=config.algorithms[0],
            num_qubits=config.qubits[0],
            error=config.error_specs()[0],
            sigma_target=config.sigma,
            capacity_n=config.capacity_n,
            master_seed=config.seed,
            runs_override=config.runs,
        )
        rows = [run_case(spec, config.workers)]
    else:
        rows = sweep(_sweep_grid(config), config.seed, config.workers)
    emit(rows, config.output_format, config.out)
    return rows


def main(argv: Sequence[str] | None = None) -> int:
    """Run the command line and return the process exit code."""
    try:
        config = parse_config(argv)
    except ConfigError as e:
        click.echo(f"qjump: error: {e}", err=True)
        return 2
    if config is None:
        return 0
    logging.basicConfig(
        level=config.log_level,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        run(config)
    except (ValueError, ArithmeticError, OSError) as e:
        click.echo(f"qjump: error: {e}", err=True)
        return 1
    return 0
