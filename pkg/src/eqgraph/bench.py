"""Benchmark scenarios for the velocity-tracking problem."""

from __future__ import annotations

import csv
import enum
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .constraints import ALConfig, optimize_augmented_lagrangian, optimize_kkt_gauss_newton
from .errors import InvalidHorizon, InvalidInput, InvalidWeight
from .solvers import SolverConfig, Termination, optimize_gauss_newton
from .vehicle import (
    NONLINEAR,
    Linearized,
    Method,
    OCPGraph,
    OCPProblem,
    OCPWeights,
    ReferenceTrajectory,
    VehicleParams,
    build_ocp_graph,
    fit_linearization,
    rmse,
)

logger = logging.getLogger(__name__)

V_MAX = 30.0


def synthesize_reference(n: int, dt: float = 1.0, seed: int = 0) -> ReferenceTrajectory:
    """Seeded drive cycle of holds and constant-acceleration ramps in [0, 30] m/s.

    Starts from standstill.  Same arguments give the same profile.
    """
    if n < 2:
        raise InvalidHorizon(f"reference needs at least 2 samples, got {n}")
    rng = np.random.default_rng(seed)
    samples = [0.0]
    v = 0.0
    while len(samples) < n:
        if rng.random() < 0.4:
            length = int(rng.integers(5, 31))
            samples.extend([v] * length)
        else:
            target = float(rng.uniform(0.0, V_MAX))
            accel = float(rng.uniform(0.3, 1.5))
            steps = max(1, math.ceil(abs(target - v) / (accel * dt)))
            ramp = np.linspace(v, target, steps + 1)[1:]
            samples.extend(ramp.tolist())
            v = target
    return ReferenceTrajectory(np.clip(np.array(samples[:n]), 0.0, V_MAX), dt)


# -- scenarios ---------------------------------------------------------------------


class ScenarioKind(enum.Enum):
    UNCONSTRAINED = "unconstrained"
    KKT_LINEAR = "kkt-linear"
    KKT_NONLINEAR = "kkt-nonlinear"
    AL_LINEAR = "al-linear"
    AL_NONLINEAR = "al-nonlinear"
    SOFT = "soft"


@dataclass(frozen=True)
class Scenario:
    kind: ScenarioKind
    soft_weight: float | None = None

    def __post_init__(self):
        if self.kind is ScenarioKind.SOFT:
            if self.soft_weight is None or not self.soft_weight > 0:
                raise InvalidWeight(f"soft scenario needs a positive weight, got {self.soft_weight}")

    @classmethod
    def parse(cls, text: str) -> "Scenario":
        """``kkt-nonlinear``, ``al-linear``, ``soft:1e6`` and so on."""
        name, _, weight = text.partition(":")
        try:
            kind = ScenarioKind(name)
        except ValueError:
            choices = ", ".join(k.value for k in ScenarioKind)
            raise InvalidInput(f"unknown scenario {text!r} (choose from {choices})") from None
        if kind is ScenarioKind.SOFT:
            return cls(kind, float(weight) if weight else 1e6)
        if weight:
            raise InvalidInput(f"scenario {name!r} takes no weight")
        return cls(kind)

    @property
    def name(self) -> str:
        if self.kind is ScenarioKind.SOFT:
            return f"soft:{self.soft_weight:g}"
        return self.kind.value

    @property
    def method(self) -> Method:
        return {
            ScenarioKind.UNCONSTRAINED: Method.UNCONSTRAINED,
            ScenarioKind.KKT_LINEAR: Method.KKT,
            ScenarioKind.KKT_NONLINEAR: Method.KKT,
            ScenarioKind.AL_LINEAR: Method.AL,
            ScenarioKind.AL_NONLINEAR: Method.AL,
            ScenarioKind.SOFT: Method.SOFT,
        }[self.kind]

    @property
    def linearized(self) -> bool:
        return self.kind in (ScenarioKind.KKT_LINEAR, ScenarioKind.AL_LINEAR)

    @property
    def kkt_counterpart(self) -> "Scenario":
        return Scenario(ScenarioKind.KKT_LINEAR if self.linearized else ScenarioKind.KKT_NONLINEAR)


DEFAULT_SCENARIOS = tuple(
    Scenario(k)
    for k in (
        ScenarioKind.UNCONSTRAINED,
        ScenarioKind.KKT_LINEAR,
        ScenarioKind.KKT_NONLINEAR,
        ScenarioKind.AL_LINEAR,
        ScenarioKind.AL_NONLINEAR,
    )
)
DEFAULT_HORIZONS = (5, 100, 385)


@dataclass
class BenchConfig:
    """Everything that stays fixed across a grid of scenario runs."""

    params: VehicleParams = field(default_factory=VehicleParams)
    weights: OCPWeights = field(default_factory=OCPWeights)
    solver: SolverConfig = field(default_factory=SolverConfig)
    al: ALConfig = field(default_factory=ALConfig)
    seed: int = 42
    reference: ReferenceTrajectory | None = None
    linearization_point: float | None = None

    def reference_for(self, n: int) -> ReferenceTrajectory:
        if self.reference is None:
            return synthesize_reference(n, self.params.dt, self.seed)
        if n > len(self.reference):
            raise InvalidHorizon(f"reference has {len(self.reference)} samples, N={n} requested")
        return ReferenceTrajectory(self.reference.samples[:n], self.reference.dt)

    def problem(self, scenario: Scenario, n: int) -> OCPProblem:
        ref = self.reference_for(n)
        mode = NONLINEAR
        if scenario.linearized:
            v_nom = self.linearization_point
            if v_nom is None:
                v_nom = float(np.mean(ref.samples))
            mode = Linearized(*fit_linearization(v_nom))
        return OCPProblem(ref, self.params, self.weights, mode)


CSV_COLUMNS = (
    "scenario",
    "N",
    "iterations",
    "mean_iter_time_s",
    "total_time_s",
    "constraint_violation",
    "rmse_vs_kkt",
    "termination",
)


@dataclass
class BenchReport:
    scenario: str
    N: int
    iterations: int
    mean_iter_time_s: float
    total_time_s: float
    constraint_violation: float
    rmse_vs_kkt: float | None
    termination: str
    repeats: int = 1

    @property
    def ok(self) -> bool:
        return self.termination == Termination.STEP_TOLERANCE.value


@dataclass
class ScenarioRun:
    report: BenchReport
    velocities: np.ndarray
    inputs: np.ndarray
    ocp: OCPGraph


def _solve(ocp: OCPGraph, scenario: Scenario, config: BenchConfig):
    if scenario.method is Method.KKT:
        return optimize_kkt_gauss_newton(ocp.graph, config.solver)
    if scenario.method is Method.AL:
        return optimize_augmented_lagrangian(ocp.graph, config.al)
    return optimize_gauss_newton(ocp.graph, config.solver)


def run_scenario(scenario: Scenario, n: int, repeats: int = 1, config: BenchConfig | None = None) -> ScenarioRun:
    """Build and solve one scenario ``repeats`` times.

    Times cover the solve only; graph construction is excluded.  Reported
    times are means over the repeats.
    """
    if repeats < 1:
        raise InvalidInput("repeats must be at least 1")
    config = config or BenchConfig()
    problem = config.problem(scenario, n)
    elapsed = []
    first = None
    for _ in range(repeats):
        ocp = build_ocp_graph(problem, scenario.method, scenario.soft_weight)
        start = time.perf_counter()
        _, stats = _solve(ocp, scenario, config)
        elapsed.append(time.perf_counter() - start)
        velocities = ocp.velocities()
        if first is None:
            first = (ocp, stats, velocities)
        elif stats.iterations != first[1].iterations or not np.array_equal(velocities, first[2]):
            raise RuntimeError(f"{scenario.name} N={n}: repeated solves disagree")
    ocp, stats, velocities = first
    total = float(np.mean(elapsed))
    residual = ocp.dynamics_residual()
    report = BenchReport(
        scenario=scenario.name,
        N=n,
        iterations=stats.iterations,
        mean_iter_time_s=total / max(stats.iterations, 1),
        total_time_s=total,
        constraint_violation=float(np.max(np.abs(residual))),
        rmse_vs_kkt=None,
        termination=stats.termination.value,
        repeats=repeats,
    )
    logger.info("%s N=%d: %d iterations, %s", scenario.name, n, stats.iterations, report.termination)
    return ScenarioRun(report, velocities, ocp.inputs(), ocp)


def run_grid(
    scenarios: Sequence[Scenario] = DEFAULT_SCENARIOS,
    horizons: Sequence[int] = DEFAULT_HORIZONS,
    repeats: int = 100,
    config: BenchConfig | None = None,
    parallel: bool = False,
) -> list[BenchReport]:
    """Every scenario at every horizon, with RMSE against the matching KKT run."""
    config = config or BenchConfig()
    jobs = [(s, n) for n in horizons for s in scenarios]
    if parallel:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor() as pool:
            runs = list(pool.map(lambda job: run_scenario(job[0], job[1], repeats, config), jobs))
    else:
        runs = [run_scenario(s, n, repeats, config) for s, n in jobs]
    by_key = {(s.name, n): run for (s, n), run in zip(jobs, runs)}
    for (scenario, n), run in zip(jobs, runs):
        if scenario.method is Method.KKT:
            continue
        ref_key = (scenario.kkt_counterpart.name, n)
        if ref_key not in by_key:
            by_key[ref_key] = run_scenario(scenario.kkt_counterpart, n, 1, config)
        run.report.rmse_vs_kkt = rmse(run.velocities, by_key[ref_key].velocities)
    return [run.report for run in runs]


@dataclass
class Comparison:
    N: int
    rmse: float
    kkt_iterations: int
    al_iterations: int
    iteration_ratio: float
    time_per_iteration_ratio: float
    kkt: BenchReport
    al: BenchReport


def compare_methods(n: int, repeats: int = 1, config: BenchConfig | None = None) -> Comparison:
    """KKT vs AL on the same nonlinear problem.

    ``time_per_iteration_ratio`` is KKT over AL, so values above one mean
    the KKT iterations are slower.
    """
    config = config or BenchConfig()
    kkt = run_scenario(Scenario(ScenarioKind.KKT_NONLINEAR), n, repeats, config)
    al = run_scenario(Scenario(ScenarioKind.AL_NONLINEAR), n, repeats, config)
    error = rmse(kkt.velocities, al.velocities)
    al.report.rmse_vs_kkt = error
    return Comparison(
        N=n,
        rmse=error,
        kkt_iterations=kkt.report.iterations,
        al_iterations=al.report.iterations,
        iteration_ratio=al.report.iterations / kkt.report.iterations,
        time_per_iteration_ratio=kkt.report.mean_iter_time_s / al.report.mean_iter_time_s,
        kkt=kkt.report,
        al=al.report,
    )


# -- output ------------------------------------------------------------------------


def report_rows(reports: Sequence[BenchReport]) -> list[dict]:
    return [{col: asdict(r)[col] for col in CSV_COLUMNS} for r in reports]


def emit_report(reports: Sequence[BenchReport], fmt: str, path) -> None:
    """Write reports as CSV or JSON.  ``path`` may be a file path or a text stream."""
    fmt = fmt.lower()
    if fmt not in ("csv", "json"):
        raise InvalidInput(f"unknown format {fmt!r}")
    rows = report_rows(reports)
    if hasattr(path, "write"):
        _write_rows(rows, fmt, path)
        return
    with open(Path(path), "w", newline="") as fh:
        _write_rows(rows, fmt, fh)


def _write_rows(rows, fmt, fh) -> None:
    if fmt == "json":
        json.dump(rows, fh, indent=2)
        fh.write("\n")
        return
    writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if v is None else _fmt(v)) for k, v in row.items()})


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return value


def load_report(path, fmt: str) -> list[BenchReport]:
    """Inverse of ``emit_report``."""
    with open(path, newline="") as fh:
        if fmt == "json":
            rows = json.load(fh)
        else:
            rows = list(csv.DictReader(fh))
    reports = []
    for row in rows:
        rmse_value = row["rmse_vs_kkt"]
        reports.append(
            BenchReport(
                scenario=row["scenario"],
                N=int(row["N"]),
                iterations=int(row["iterations"]),
                mean_iter_time_s=float(row["mean_iter_time_s"]),
                total_time_s=float(row["total_time_s"]),
                constraint_violation=float(row["constraint_violation"]),
                rmse_vs_kkt=None if rmse_value in (None, "") else float(rmse_value),
                termination=row["termination"],
            )
        )
    return reports
