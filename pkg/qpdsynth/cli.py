from functools import reduce
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import typer
from click import ClickException
from rich.console import Console
from rich.table import Table
from typing_extensions import Annotated

from qpdsynth.config.settings import GateConfig, RunConfig
from qpdsynth.core.budget import allocation_table, budget_sweep, gamma_opt
from qpdsynth.core.channels import (
    ChoiMatrix,
    DensityMatrix,
    choi_from_unitary,
    pauli_string,
)
from qpdsynth.core.diamond import diamond_distance
from qpdsynth.core.gates import Circuit, target_circuit
from qpdsynth.core.noise import NoiseMode, SimulatorOracle, pauli_set, standard_basis
from qpdsynth.core.qpd import approximate_qpd, exact_qpd
from qpdsynth.core.sampler import GateQpdAssignment, ObservableSpec, OutputMode, sample_circuit
from qpdsynth.core.stinespring import manifest, run_stinespring
from qpdsynth.core.tradeoff import TradeoffCurve, tradeoff_curve
from qpdsynth.core.variational import best_depth, haar_unitary, sweep_depth, sweep_rows
from qpdsynth.exceptions.base import BaseError
from qpdsynth.exceptions.decomposition import ConvergenceError, TradeoffCurveError
from qpdsynth.exceptions.solver import SolverError
from qpdsynth.utils.logging import get_log_directory, get_process_logger, init_session
from qpdsynth.utils.parallel import Parallelism
from qpdsynth.utils.utils import (
    get_package_name,
    get_version,
    write_csv,
    write_json,
    write_meta,
)

app = typer.Typer(no_args_is_help=True)
console = Console()

EXIT_USAGE = 1
EXIT_SOLVER = 2
EXIT_CONVERGENCE = 3

TRADEOFF_HEADER = ("gamma_budget", "diamond_error")
ESTIMATE_HEADER = ("shots", "mean", "stderr", "gamma_total", "abort_frac", "seed")
BUDGET_HEADER = ("gamma_total", "gate_label", "gamma_budget", "error_contribution")
SWEEP_HEADER = ("m", "fit_objective", "diamond_error")

_STATES = {
    "0": np.array([1, 0], dtype=complex),
    "1": np.array([0, 1], dtype=complex),
    "+": np.array([1, 1], dtype=complex) / np.sqrt(2),
    "-": np.array([1, -1], dtype=complex) / np.sqrt(2),
}


def version_callback(*, value: bool) -> None:
    if value:
        package_name = get_package_name()
        version = get_version(package_name=package_name)
        typer.echo(f"{package_name} {version}")
        raise typer.Exit()


ConfigOption = Annotated[Optional[Path], typer.Option("--config", "-c", help="JSON run configuration")]
JobsOption = Annotated[Optional[int], typer.Option("--jobs", "-j", help="Worker processes (default 1)")]
SeedOption = Annotated[Optional[int], typer.Option("--seed", help="Master seed (overrides the file)")]
OutOption = Annotated[Optional[Path], typer.Option("--out", "-o", help="Output directory")]


@app.callback()
def main(
    version: Annotated[Optional[bool], typer.Option("--version", "-v", callback=version_callback, is_eager=True)] = None,
) -> None:
    """Quasiprobability decompositions of noisy quantum gates."""


class FailedRun(Exception):
    """A command finished and wrote its outputs, but must exit nonzero."""

    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.message = message
        self.code = code


def _run(
    command: str,
    body: Callable[[RunConfig, Parallelism], None],
    config_path: Optional[Path],
    jobs: Optional[int],
    seed: Optional[int],
    out: Optional[Path],
) -> None:
    init_session()
    logger_base = get_process_logger()
    logger_base.info(f"Command '{command}' started")
    try:
        config = RunConfig.load(config_path, seed=seed, jobs=jobs, out=out)
        body(config, Parallelism(config.jobs))
    except ClickException as e:
        logger_base.error(f"{type(e).__name__}: {e.format_message()}", exc_info=True)
        console.print(f"[red]Error: {e.format_message()}[/]")
        raise typer.Exit(EXIT_USAGE)
    except FailedRun as e:
        logger_base.error(f"{command}: {e.message}")
        console.print(f"[red]❌ {e.message}[/]")
        raise typer.Exit(e.code)
    except ConvergenceError as e:
        logger_base.error(f"ConvergenceError: {e}", exc_info=True)
        console.print(f"[red]❌ {e}[/]")
        raise typer.Exit(EXIT_CONVERGENCE)
    except (SolverError, TradeoffCurveError) as e:
        logger_base.error(f"{type(e).__name__}: {e}", exc_info=True)
        console.print(f"[red]❌ {e}[/]")
        console.print(f"[red](For more details, check the log files at: {get_log_directory()})[/]")
        raise typer.Exit(EXIT_SOLVER)
    except BaseError as e:
        logger_base.error(f"{type(e).__name__}: {e}", exc_info=True)
        console.print(f"[red]Error: {e}[/]")
        raise typer.Exit(EXIT_USAGE)
    logger_base.info(f"Command '{command}' finished")


def _emit(path: Path, command: str, config: RunConfig) -> None:
    write_meta(path, command, config.config_hash(), config.seed)
    console.print(f"[green]✅ Wrote {path}[/]")


def _oracle(config: RunConfig) -> SimulatorOracle:
    return SimulatorOracle(config.noise.model(), NoiseMode(config.noise.mode))


def _gate(data: Dict[str, Any]) -> GateConfig:
    return GateConfig(**data)


def _label(gate: GateConfig) -> str:
    name = gate.name.upper()
    return name if gate.angle is None else f"{name}({gate.angle:g})"


def _circuit(gate: GateConfig) -> Circuit:
    return target_circuit(gate.name, gate.angle)


def _ideal(circuit: Circuit) -> ChoiMatrix:
    return choi_from_unitary(circuit.unitary())


def _channels(basis: str, circuit: Circuit, oracle: SimulatorOracle) -> List[Tuple[str, ChoiMatrix]]:
    if basis == "pauli":
        return pauli_set(circuit, oracle)
    return [*standard_basis(circuit.n_data, oracle), ("noisy_target", oracle(circuit))]


def _product_state(label: str) -> DensityMatrix:
    if not label or any(char not in _STATES for char in label):
        raise typer.BadParameter(
            message=f"States are strings over '0', '1', '+', '-': '{label}'.", param_hint="'sample.state'"
        )
    return DensityMatrix.from_state(reduce(np.kron, [_STATES[char] for char in label]))


def _observable(label: str, n_qubits: int) -> ObservableSpec:
    if len(label) != n_qubits or any(char not in "IXYZ" for char in label.upper()):
        raise typer.BadParameter(
            message=f"Observable must be a {n_qubits}-qubit Pauli string: '{label}'.", param_hint="'sample.observable'"
        )
    return ObservableSpec(pauli_string(label.upper()))


def _curve_rows(curve: TradeoffCurve) -> List[Dict[str, float]]:
    return [{"gamma_budget": budget, "diamond_error": error} for budget, error in curve.rows()]


def _tradeoff(config: RunConfig, parallelism: Parallelism) -> None:
    section = config.tradeoff
    circuit = _circuit(config.target)
    label = _label(config.target)
    path = config.out / "tradeoff.csv"
    try:
        curve = tradeoff_curve(
            _ideal(circuit),
            _channels(section.basis, circuit, _oracle(config)),
            section.budgets,
            section.enforce_cp,
            section.enforce_tp,
            label,
            parallelism,
            config.tolerances,
        )
    except TradeoffCurveError as e:
        if e.partial is not None:
            write_csv(_curve_rows(e.partial), TRADEOFF_HEADER, path)
            _emit(path, "tradeoff", config)
        raise

    write_csv(_curve_rows(curve), TRADEOFF_HEADER, path)
    table = Table(title=f"Tradeoff {label} ({section.basis})")
    table.add_column("γ budget", justify="right")
    table.add_column("diamond error", justify="right")
    for budget, error in curve.rows():
        table.add_row(f"{budget:.6g}", f"{error:.3e}")
    console.print(table)
    if curve.gamma_opt is not None:
        console.print(f"γ_opt = {curve.gamma_opt:.12g}")
    _emit(path, "tradeoff", config)


def _decompose(config: RunConfig, parallelism: Parallelism) -> None:
    section = config.decompose
    circuit = _circuit(config.target)
    channels = _channels(section.basis, circuit, _oracle(config))
    if section.method == "exact":
        qpd = exact_qpd(_ideal(circuit), channels, config.tolerances)
    else:
        qpd = approximate_qpd(
            _ideal(circuit), channels, section.budget, section.enforce_cp, section.enforce_tp, config.tolerances
        )

    path = write_json(qpd.to_json(), config.out / "qpd.json")
    table = Table(title=f"QPD of {_label(config.target)} ({section.method}, {section.basis})")
    table.add_column("channel")
    table.add_column("a", justify="right")
    for item in qpd.nonzero_items():
        table.add_row(item.label, f"{item.coefficient:+.10f}")
    console.print(table)
    console.print(f"γ = {qpd.gamma:.12g}, residual diamond error = {qpd.residual_diamond_error:.3e}")
    _emit(path, "decompose", config)


def _stinespring(config: RunConfig, parallelism: Parallelism) -> None:
    stinespring_config = config.stinespring.build(config.seed)
    oracle = _oracle(config)
    result = run_stinespring(_circuit(config.target), oracle, stinespring_config, parallelism, config.tolerances)

    path = write_json(manifest(result, stinespring_config, oracle), config.out / "stinespring_manifest.json")
    _emit(path, "stinespring", config)
    bundle = write_json(result.decomposition_set.to_json(), config.out / "decomposition_set.json")
    _emit(bundle, "stinespring", config)
    qpd_path = write_json(result.qpd.to_json(), config.out / "stinespring_qpd.json")
    _emit(qpd_path, "stinespring", config)

    table = Table(title=f"Stinespring iterations for {_label(config.target)}")
    table.add_column("iteration", justify="right")
    table.add_column("Δ", justify="right")
    table.add_column("γ", justify="right")
    table.add_column("set size", justify="right")
    for record in result.trace.records:
        table.add_row(str(record.iteration), f"{record.delta_error:.3e}", f"{record.gamma:.6g}", str(record.set_size))
    console.print(table)
    result.raise_for_status()
    console.print(f"[green]Converged with γ = {result.qpd.gamma:.12g}[/]")


def _sample(config: RunConfig, parallelism: Parallelism) -> None:
    section = config.sample
    rho = _product_state(section.state)
    oracle = _oracle(config)
    gates = [_gate(data) for data in section.gates] or [config.target]
    qpds = []
    for gate in gates:
        circuit = _circuit(gate)
        if circuit.n_data != rho.n_qubits:
            raise typer.BadParameter(
                message=f"Gate {_label(gate)} does not act on the {rho.n_qubits}-qubit state.",
                param_hint="'sample.gates'",
            )
        qpds.append(exact_qpd(_ideal(circuit), _channels(section.basis, circuit, oracle), config.tolerances))

    report = sample_circuit(
        rho,
        GateQpdAssignment(tuple(qpds)),
        _observable(section.observable, rho.n_qubits),
        section.shots,
        config.seed,
        OutputMode(section.mode),
        parallelism,
    )
    path = write_json(report.to_json(), config.out / "estimate.json")
    _emit(path, "sample", config)
    rows = write_csv([report.row()], ESTIMATE_HEADER, config.out / "estimate.csv")
    _emit(rows, "sample", config)
    console.print(
        f"⟨{section.observable}⟩ ≈ {report.mean:.8g} ± {report.stderr:.3g} "
        f"(γ_total = {report.gamma_total:.6g}, aborts = {report.abort_fraction:.4f})"
    )


def _budget(config: RunConfig, parallelism: Parallelism) -> None:
    section = config.budget
    oracle = _oracle(config)
    gates = [_gate(data) for data in section.gates]
    labels = [f"{index}:{_label(gate)}" for index, gate in enumerate(gates)]
    curves = []
    for gate, label in zip(gates, labels):
        circuit = _circuit(gate)
        curves.append(
            tradeoff_curve(
                _ideal(circuit),
                _channels(section.basis, circuit, oracle),
                enforce_cp=True,
                enforce_tp=True,
                label=label,
                parallelism=parallelism,
                tolerances=config.tolerances,
            )
        )
    totals = section.totals or list(np.geomspace(1.0, float(np.prod([gamma_opt(c) for c in curves])), 11))
    allocations = budget_sweep(curves, totals, labels, config.seed, parallelism)

    path = write_csv(allocation_table(allocations), BUDGET_HEADER, config.out / "budget.csv")
    table = Table(title="γ budget allocation")
    table.add_column("γ_total", justify="right")
    for label in labels:
        table.add_column(label, justify="right")
    table.add_column("Σ error", justify="right")
    for allocation in allocations:
        table.add_row(
            f"{allocation.gamma_total:.6g}",
            *[f"{budget:.4g}" for budget in allocation.budgets],
            f"{allocation.objective:.3e}",
        )
    console.print(table)
    _emit(path, "budget", config)


def _diamond(config: RunConfig, parallelism: Parallelism) -> None:
    section = config.diamond
    second_gate = _gate(section.second) if section.second is not None else config.target
    first = _ideal(_circuit(config.target))
    second = _oracle(config)(_circuit(second_gate))
    if not first.same_shape(second):
        raise typer.BadParameter(
            message="Both channels must act on the same number of qubits.", param_hint="'diamond.second'"
        )
    value = diamond_distance(first, second, section.formulation, config.tolerances)
    path = write_json(
        {
            "first": _label(config.target),
            "second": f"noisy {_label(second_gate)}",
            "formulation": section.formulation,
            "diamond_distance": value,
        },
        config.out / "diamond.json",
    )
    typer.echo(repr(value))
    _emit(path, "diamond", config)


def _variational(config: RunConfig, parallelism: Parallelism) -> None:
    section = config.variational
    unitary = haar_unitary(2**section.n_qubits, section.unitary_seed)
    rows = sweep_depth(
        unitary,
        section.depths,
        _oracle(config),
        restarts=section.restarts,
        seed=config.seed,
        parallelism=parallelism,
        tolerances=config.tolerances,
    )
    path = write_csv(sweep_rows(rows), SWEEP_HEADER, config.out / "depth_sweep.csv")
    table = Table(title=f"Depth sweep, Haar-random {section.n_qubits}-qubit unitary")
    table.add_column("m", justify="right")
    table.add_column("fit objective", justify="right")
    table.add_column("diamond error", justify="right")
    for row in rows:
        table.add_row(str(row.depth), f"{row.fit_objective:.3e}", f"{row.diamond_error:.3e}")
    console.print(table)
    console.print(f"Best depth: {best_depth(rows)}")
    _emit(path, "variational", config)
    failed = [row for row in rows if row.error]
    if len(failed) == len(rows):
        raise FailedRun("Every depth of the sweep failed", EXIT_SOLVER)


@app.command()
def tradeoff(config: ConfigOption = None, jobs: JobsOption = None, seed: SeedOption = None, out: OutOption = None) -> None:
    """Diamond error of the best γ-budgeted QPD over a grid of budgets."""
    _run("tradeoff", _tradeoff, config, jobs, seed, out)


@app.command()
def decompose(config: ConfigOption = None, jobs: JobsOption = None, seed: SeedOption = None, out: OutOption = None) -> None:
    """Exact minimal-γ or budgeted approximate QPD of the target gate."""
    _run("decompose", _decompose, config, jobs, seed, out)


@app.command()
def stinespring(config: ConfigOption = None, jobs: JobsOption = None, seed: SeedOption = None, out: OutOption = None) -> None:
    """Grow a decomposition set until the target is decomposed below the threshold."""
    _run("stinespring", _stinespring, config, jobs, seed, out)


@app.command()
def sample(config: ConfigOption = None, jobs: JobsOption = None, seed: SeedOption = None, out: OutOption = None) -> None:
    """Monte Carlo estimate of an observable through per-gate QPDs."""
    _run("sample", _sample, config, jobs, seed, out)


@app.command()
def budget(config: ConfigOption = None, jobs: JobsOption = None, seed: SeedOption = None, out: OutOption = None) -> None:
    """Split total γ budgets across the gates of a circuit."""
    _run("budget", _budget, config, jobs, seed, out)


@app.command()
def diamond(config: ConfigOption = None, jobs: JobsOption = None, seed: SeedOption = None, out: OutOption = None) -> None:
    """Diamond distance between the ideal target and a noisy realization."""
    _run("diamond", _diamond, config, jobs, seed, out)


@app.command()
def variational(config: ConfigOption = None, jobs: JobsOption = None, seed: SeedOption = None, out: OutOption = None) -> None:
    """Fit a Haar-random unitary at several ansatz depths and report the diamond error per depth."""
    _run("variational", _variational, config, jobs, seed, out)


if __name__ == "__main__":
    app()
