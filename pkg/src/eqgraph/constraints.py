"""Equality constraints on factor graphs.

Two ways of enforcing ``h(x) = 0`` are provided:

* KKT edges: each constraint becomes an ordinary edge over the primal
  variables plus a multiplier node, with stacked error ``[h(x); gamma]``
  and information ``[[0, I], [I, 0]]``.  The generic ``J^T Omega J`` /
  ``-J^T Omega e`` assembly of that edge yields exactly the constraint rows
  and columns of the KKT matrix, so plain Gauss-Newton on the augmented
  graph solves the constrained problem.
* Augmented Lagrangian: the same constraint edges are read as penalty
  terms; multipliers live in a ``PenaltyState`` and are updated between
  inner Gauss-Newton steps.

A soft-constraint edge (large finite weight) is kept as a baseline.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidDimension, InvalidWeight, SingularSystemError
from .graph import (
    Edge,
    FactorGraph,
    IndexMap,
    VariableKind,
    compute_error,
    compute_jacobian,
    finite_difference_jacobian,
)
from .linear import assemble, edge_contribution, solve_symmetric_indefinite
from .solvers import (
    IterationStats,
    SolverConfig,
    Termination,
    optimize_gauss_newton,
)

logger = logging.getLogger(__name__)


def equality_information(d: int) -> np.ndarray:
    """``[[0, I_d], [I_d, 0]]``."""
    eye = np.eye(d)
    zero = np.zeros((d, d))
    return np.block([[zero, eye], [eye, zero]])


@dataclass
class EqualityEdge(Edge):
    primal_var_ids: tuple[int, ...] = ()
    constraint_dim: int = 1
    h_fn: Callable[..., np.ndarray] | None = None
    h_jacobian_fn: Callable[..., Sequence[np.ndarray]] | None = None
    multiplier_id: int = -1

    @property
    def is_constraint(self) -> bool:
        return True


def _as_vector(v, d: int, what: str) -> np.ndarray:
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape[0] != d:
        raise InvalidDimension(f"{what} has length {v.shape[0]}, expected {d}")
    return v


def constraint_value(edge: EqualityEdge, values) -> np.ndarray:
    """``h`` evaluated at ``values`` (the top half of the stacked error)."""
    return compute_error(edge, values)[: edge.constraint_dim]


def constraint_jacobian(edge: EqualityEdge, values) -> list[np.ndarray]:
    """Blocks of ``dh/dx`` for each primal variable of the constraint."""
    d = edge.constraint_dim
    blocks = compute_jacobian(edge, values)
    return [blk[:d, :] for blk in blocks[:-1]]


def add_equality_constraint(
    graph: FactorGraph,
    primal_var_ids: Sequence[int],
    h_fn: Callable[..., np.ndarray],
    d: int,
    h_jacobian_fn: Callable[..., Sequence[np.ndarray]] | None = None,
    initial_multiplier=None,
) -> tuple[int, int]:
    """Attach ``h(x) = 0`` as a KKT edge.  Returns ``(edge_id, multiplier_id)``.

    A multiplier node of dimension ``d`` is created (zero unless
    ``initial_multiplier`` is given) and appended to the edge's variables.
    """
    primal_var_ids = tuple(primal_var_ids)
    if d < 1:
        raise InvalidDimension(f"constraint dimension must be positive, got {d}")
    graph._check_vars(primal_var_ids)
    gamma0 = np.zeros(d) if initial_multiplier is None else initial_multiplier
    mult_id = graph.add_variable(d, gamma0, kind=VariableKind.MULTIPLIER)
    dims = [graph.variables[vid].dim for vid in primal_var_ids]

    def error_fn(*args):
        h = _as_vector(h_fn(*args[:-1]), d, "constraint value")
        return np.concatenate([h, args[-1]])

    def jacobian_fn(*args):
        primal = args[:-1]
        if h_jacobian_fn is not None:
            J_h = [np.atleast_2d(np.asarray(b, dtype=float)) for b in h_jacobian_fn(*primal)]
        else:
            J_h = finite_difference_jacobian(
                lambda *a: _as_vector(h_fn(*a), d, "constraint value"), primal, d
            )
        blocks = [np.vstack([J, np.zeros((d, n))]) for J, n in zip(J_h, dims)]
        blocks.append(np.vstack([np.zeros((d, d)), np.eye(d)]))
        return blocks

    eid = graph._reserve_edge_id()
    graph._insert_edge(
        EqualityEdge(
            id=eid,
            var_ids=primal_var_ids + (mult_id,),
            error_dim=2 * d,
            information=equality_information(d),
            error_fn=error_fn,
            jacobian_fn=jacobian_fn,
            primal_var_ids=primal_var_ids,
            constraint_dim=d,
            h_fn=h_fn,
            h_jacobian_fn=h_jacobian_fn,
            multiplier_id=mult_id,
        )
    )
    return eid, mult_id


def equality_edges(graph: FactorGraph) -> list[EqualityEdge]:
    return [graph.edges[eid] for eid in graph.edge_ids() if graph.edges[eid].is_constraint]


def equality_edge_contribution(edge: EqualityEdge, values, index: IndexMap | None = None):
    """``(var_ids, H_n, b_n)`` produced by one KKT edge.

    With every variable free, ``H_n = [[0, J_h^T], [J_h, 0]]`` and
    ``b_n = [-J_h^T gamma; -h]``.
    """
    if index is None:
        offsets, dims, pos = {}, {}, 0
        for vid in edge.var_ids:
            n = np.asarray(values[vid]).reshape(-1).shape[0]
            offsets[vid], dims[vid] = pos, n
            pos += n
        index = IndexMap(offsets, dims, pos)
    return edge_contribution(edge, values, index)


def max_constraint_violation(graph: FactorGraph, values=None) -> float:
    values = graph.values() if values is None else values
    worst = 0.0
    for edge in equality_edges(graph):
        h = constraint_value(edge, values)
        worst = max(worst, float(np.max(np.abs(h))))
    return worst


def optimize_kkt_gauss_newton(graph: FactorGraph, config: SolverConfig | None = None):
    """Gauss-Newton over primal and multiplier nodes together.

    Termination uses the norm of the full ``(dx, dgamma)`` step.  The final
    ``max |h|`` is stored in ``stats.constraint_violation``.
    """
    values, stats = optimize_gauss_newton(graph, config)
    stats.constraint_violation = max_constraint_violation(graph)
    return values, stats


def add_soft_constraint(
    graph: FactorGraph,
    primal_var_ids: Sequence[int],
    h_fn: Callable[..., np.ndarray],
    d: int,
    weight: float,
    h_jacobian_fn: Callable[..., Sequence[np.ndarray]] | None = None,
) -> int:
    """Approximate ``h(x) = 0`` by a cost edge with information ``weight * I``."""
    if not weight > 0 or not np.isfinite(weight):
        raise InvalidWeight(f"soft-constraint weight must be positive, got {weight}")
    return graph.add_edge(
        primal_var_ids,
        lambda *a: _as_vector(h_fn(*a), d, "constraint value"),
        weight * np.eye(d),
        h_jacobian_fn,
    )


# -- augmented Lagrangian ----------------------------------------------------


@dataclass
class ALConfig:
    rho_init: float = 10.0
    rho_max: float = 50000.0
    alpha: float = 10.0
    inner_max_iterations: int = 1
    constraint_tol: float = 1e-6
    outer_max_iterations: int = 100
    step_norm_tol: float = 1e-6

    def __post_init__(self):
        if not 0 < self.rho_init <= self.rho_max:
            raise ValueError("need 0 < rho_init <= rho_max")
        if self.alpha < 1:
            raise ValueError("alpha must be >= 1")
        if self.inner_max_iterations < 1 or self.outer_max_iterations < 1:
            raise ValueError("iteration limits must be positive")
        if self.constraint_tol <= 0 or self.step_norm_tol <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class PenaltyState:
    rho: float
    multipliers: dict[int, np.ndarray] = field(default_factory=dict)

    @classmethod
    def from_graph(cls, graph: FactorGraph, rho: float) -> "PenaltyState":
        """Start from the values currently held by the multiplier nodes."""
        return cls(
            rho,
            {e.id: graph.variables[e.multiplier_id].value.copy() for e in equality_edges(graph)},
        )


def al_inner_step(graph: FactorGraph, state: PenaltyState, index: IndexMap | None = None) -> np.ndarray:
    """One Gauss-Newton step on the augmented Lagrangian; updates primal values.

    Cost edges contribute as usual.  Each constraint adds
    ``rho J_h^T J_h`` to H and ``-rho J_h^T h - J_h^T gamma`` to b.
    """
    if index is None:
        index = graph.build_index(kinds=[VariableKind.PRIMAL])
    values = graph.values()
    system = assemble(graph, index, values, edge_filter=lambda e: not e.is_constraint)
    H, b = system.H, system.b
    for edge in equality_edges(graph):
        h = constraint_value(edge, values)
        gamma = state.multipliers[edge.id]
        J_blocks = constraint_jacobian(edge, values)
        pairs = [(vid, J) for vid, J in zip(edge.primal_var_ids, J_blocks) if vid in index]
        for vid_i, J_i in pairs:
            si = index.slice(vid_i)
            b[si] -= J_i.T @ (state.rho * h + gamma)
            for vid_j, J_j in pairs:
                H[si, index.slice(vid_j)] += state.rho * (J_i.T @ J_j)
    report = solve_symmetric_indefinite(H, b)
    if not report.ok:
        raise SingularSystemError("augmented Lagrangian inner system is singular")
    graph.apply_step(index, report.step)
    return report.step


def al_update_multipliers(state: PenaltyState, h_values: dict[int, np.ndarray]) -> PenaltyState:
    multipliers = {
        eid: gamma + state.rho * np.asarray(h_values[eid], dtype=float)
        for eid, gamma in state.multipliers.items()
    }
    return replace(state, multipliers=multipliers)


def al_update_penalty(state: PenaltyState, config: ALConfig) -> PenaltyState:
    # capped growth: rho_max is an upper bound
    return replace(state, rho=min(config.rho_max, config.alpha * state.rho))


def optimize_augmented_lagrangian(graph: FactorGraph, config: ALConfig | None = None):
    """Nested-loop augmented Lagrangian over the graph's constraint edges.

    Inner loop: up to ``inner_max_iterations`` primal Gauss-Newton steps.
    Outer loop: multiplier update, then penalty update.  Stops once
    ``max |h| <= constraint_tol`` and the last inner step norm is at most
    ``step_norm_tol``.  ``stats.iterations`` counts linear solves.  Final
    multipliers are written back to the multiplier nodes.
    """
    config = config or ALConfig()
    index = graph.build_index(kinds=[VariableKind.PRIMAL])
    if index.total_dim == 0:
        raise InvalidDimension("graph has no free primal variables to optimize")
    edges = equality_edges(graph)
    state = PenaltyState.from_graph(graph, config.rho_init)
    stats = IterationStats()
    violation = 0.0
    for _ in range(config.outer_max_iterations):
        try:
            for _ in range(config.inner_max_iterations):
                step = al_inner_step(graph, state, index)
                step_norm = float(np.linalg.norm(step))
                stats.record(step_norm, graph.total_cost())
                if step_norm <= config.step_norm_tol:
                    break
        except SingularSystemError:
            logger.warning("singular inner system at iteration %d", stats.iterations + 1)
            stats.termination = Termination.SOLVER_FAILURE
            break
        values = graph.values()
        h_values = {e.id: constraint_value(e, values) for e in edges}
        violation = max((float(np.max(np.abs(h))) for h in h_values.values()), default=0.0)
        state = al_update_multipliers(state, h_values)
        if violation <= config.constraint_tol and step_norm <= config.step_norm_tol:
            stats.termination = Termination.STEP_TOLERANCE
            break
        state = al_update_penalty(state, config)
    else:
        stats.termination = Termination.MAX_ITERATIONS
    for edge in edges:
        graph.variables[edge.multiplier_id].set_value(state.multipliers[edge.id])
    stats.constraint_violation = violation
    return graph.values(), stats
