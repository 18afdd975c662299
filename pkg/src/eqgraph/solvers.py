"""Gauss-Newton and Levenberg-Marquardt loops over a factor graph."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidDimension
from .graph import FactorGraph, IndexMap
from .linear import apply_damping, assemble, solve_symmetric_indefinite

logger = logging.getLogger(__name__)

LM_MAX_LAMBDA = 1e12


class Termination(enum.Enum):
    STEP_TOLERANCE = "StepTolerance"
    MAX_ITERATIONS = "MaxIterations"
    SOLVER_FAILURE = "SolverFailure"


@dataclass
class SolverConfig:
    max_iterations: int = 100
    step_norm_tol: float = 1e-6
    lm_initial_lambda: float = 1e-3
    lm_factor: float = 10.0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if self.step_norm_tol <= 0 or self.lm_initial_lambda <= 0:
            raise ValueError("tolerances and initial damping must be positive")
        if self.lm_factor <= 1:
            raise ValueError("lm_factor must exceed 1")


@dataclass
class IterationStats:
    iterations: int = 0
    step_norms: list[float] = field(default_factory=list)
    cost_trace: list[float] = field(default_factory=list)
    termination: Termination = Termination.MAX_ITERATIONS
    constraint_violation: float = 0.0

    def record(self, step_norm: float, cost: float) -> None:
        self.iterations += 1
        self.step_norms.append(float(step_norm))
        self.cost_trace.append(float(cost))

    @property
    def converged(self) -> bool:
        return self.termination is Termination.STEP_TOLERANCE


def check_termination(step, config: SolverConfig) -> bool:
    step = np.asarray(step, dtype=float)
    if step.size == 0:
        return True
    return bool(np.linalg.norm(step) <= config.step_norm_tol)


def _free_index(graph: FactorGraph) -> IndexMap:
    index = graph.build_index()
    if index.total_dim == 0:
        raise InvalidDimension("graph has no free variables to optimize")
    return index


def optimize_gauss_newton(graph: FactorGraph, config: SolverConfig | None = None):
    """Plain Gauss-Newton: assemble, solve, add the step, repeat.

    Every linear solve counts as one iteration, including the final one
    whose step falls below the tolerance.  Multiplier nodes (if any) are
    ordinary columns of the system, so with equality edges present each
    solve is a KKT solve.
    """
    config = config or SolverConfig()
    index = _free_index(graph)
    stats = IterationStats()
    for _ in range(config.max_iterations):
        system = assemble(graph, index)
        report = solve_symmetric_indefinite(system)
        if not report.ok:
            logger.warning("singular system at iteration %d", stats.iterations + 1)
            stats.termination = Termination.SOLVER_FAILURE
            break
        graph.apply_step(index, report.step)
        stats.record(np.linalg.norm(report.step), graph.total_cost())
        if check_termination(report.step, config):
            stats.termination = Termination.STEP_TOLERANCE
            break
    else:
        stats.termination = Termination.MAX_ITERATIONS
    return graph.values(), stats


def optimize_levenberg_marquardt(graph: FactorGraph, config: SolverConfig | None = None):
    """Gauss-Newton with adaptive diagonal damping on the primal blocks.

    Steps that lower the objective are kept and the damping shrinks;
    otherwise the step is discarded and the damping grows.  Each attempted
    solve counts as an iteration; the recorded cost is the cost after the
    accept/reject decision, so the trace never increases.
    """
    config = config or SolverConfig()
    index = _free_index(graph)
    stats = IterationStats()
    lam = config.lm_initial_lambda
    cost = graph.total_cost(include_constraints=True)
    system = None
    while stats.iterations < config.max_iterations:
        if system is None:
            system = assemble(graph, index)
        report = solve_symmetric_indefinite(apply_damping(system, lam))
        if not report.ok:
            lam *= config.lm_factor
            stats.record(float("nan"), cost)
        else:
            step = report.step
            if check_termination(step, config):
                graph.apply_step(index, step)
                cost = graph.total_cost(include_constraints=True)
                stats.record(np.linalg.norm(step), cost)
                stats.termination = Termination.STEP_TOLERANCE
                break
            saved = graph.values()
            graph.apply_step(index, step)
            new_cost = graph.total_cost(include_constraints=True)
            if new_cost < cost:
                cost = new_cost
                lam /= config.lm_factor
                system = None
            else:
                graph.set_values(saved)
                lam *= config.lm_factor
            stats.record(np.linalg.norm(step), cost)
        if lam > LM_MAX_LAMBDA:
            stats.termination = Termination.SOLVER_FAILURE
            break
    else:
        stats.termination = Termination.MAX_ITERATIONS
    return graph.values(), stats
