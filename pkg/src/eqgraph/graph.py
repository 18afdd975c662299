"""Variables, edges and the factor graph container.

Error functions take the values of the connected variables as positional
arguments (in ``var_ids`` order) and return a 1-d array.  Jacobian
functions take the same arguments and return one ``(error_dim, dim_j)``
block per connected variable.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (
    InvalidDimension,
    InvalidInformation,
    NonFiniteError,
    NonFiniteJacobian,
    UnknownVariable,
)

ErrorFn = Callable[..., np.ndarray]
JacobianFn = Callable[..., Sequence[np.ndarray]]

SYMMETRY_TOL = 1e-12
FD_REL_STEP = 1e-6


class VariableKind(enum.Enum):
    PRIMAL = "primal"
    MULTIPLIER = "multiplier"


@dataclass
class VariableNode:
    id: int
    dim: int
    value: np.ndarray
    fixed: bool = False
    kind: VariableKind = VariableKind.PRIMAL

    def set_value(self, value) -> None:
        value = np.array(value, dtype=float).reshape(-1)
        if value.shape[0] != self.dim:
            raise InvalidDimension(
                f"variable {self.id} has dim {self.dim}, got value of length {value.shape[0]}"
            )
        self.value = value


@dataclass
class Edge:
    id: int
    var_ids: tuple[int, ...]
    error_dim: int
    information: np.ndarray
    error_fn: ErrorFn
    jacobian_fn: JacobianFn | None = None

    @property
    def is_constraint(self) -> bool:
        return False


@dataclass
class IndexMap:
    offsets: dict[int, int]
    dims: dict[int, int]
    total_dim: int
    kinds: dict[int, VariableKind] = field(default_factory=dict)

    def slice(self, var_id: int) -> slice:
        start = self.offsets[var_id]
        return slice(start, start + self.dims[var_id])

    def __contains__(self, var_id: int) -> bool:
        return var_id in self.offsets


@dataclass
class FactorGraph:
    variables: dict[int, VariableNode] = field(default_factory=dict)
    edges: dict[int, Edge] = field(default_factory=dict)

    def __post_init__(self):
        self._next_var = max(self.variables, default=-1) + 1
        self._next_edge = max(self.edges, default=-1) + 1

    # -- construction -------------------------------------------------------

    def add_variable(
        self,
        dim: int,
        initial,
        fixed: bool = False,
        kind: VariableKind = VariableKind.PRIMAL,
    ) -> int:
        if dim < 1:
            raise InvalidDimension(f"dim must be positive, got {dim}")
        initial = np.array(initial, dtype=float).reshape(-1)
        if initial.shape[0] != dim:
            raise InvalidDimension(f"initial value has length {initial.shape[0]}, expected {dim}")
        vid = self._next_var
        self._next_var += 1
        self.variables[vid] = VariableNode(vid, dim, initial, fixed, kind)
        return vid

    def add_edge(
        self,
        var_ids: Iterable[int],
        error_fn: ErrorFn,
        information,
        jacobian_fn: JacobianFn | None = None,
    ) -> int:
        var_ids = tuple(var_ids)
        self._check_vars(var_ids)
        info = _check_information(information)
        eid = self._next_edge
        self._next_edge += 1
        self.edges[eid] = Edge(eid, var_ids, info.shape[0], info, error_fn, jacobian_fn)
        return eid

    def _insert_edge(self, edge: Edge) -> None:
        # used by subclasses of Edge that are built outside add_edge
        self.edges[edge.id] = edge

    def _reserve_edge_id(self) -> int:
        eid = self._next_edge
        self._next_edge += 1
        return eid

    def _check_vars(self, var_ids: Sequence[int]) -> None:
        if not var_ids:
            raise InvalidDimension("an edge needs at least one variable")
        for vid in var_ids:
            if vid not in self.variables:
                raise UnknownVariable(vid)

    # -- queries ------------------------------------------------------------

    def variable_ids(self) -> list[int]:
        return sorted(self.variables)

    def edge_ids(self) -> list[int]:
        return sorted(self.edges)

    def values(self) -> dict[int, np.ndarray]:
        """Copy of the current value of every variable."""
        return {vid: self.variables[vid].value.copy() for vid in self.variable_ids()}

    def set_values(self, values: dict[int, np.ndarray]) -> None:
        for vid, value in values.items():
            self.variables[vid].set_value(value)

    def build_index(self, kinds: Iterable[VariableKind] | None = None) -> IndexMap:
        """Column layout of the global system.

        Non-fixed variables are packed contiguously in ascending id order.
        ``kinds`` restricts the layout to variables of the given kinds.
        """
        kinds = None if kinds is None else set(kinds)
        offsets, dims, var_kinds = {}, {}, {}
        offset = 0
        for vid in self.variable_ids():
            var = self.variables[vid]
            if var.fixed or (kinds is not None and var.kind not in kinds):
                continue
            offsets[vid] = offset
            dims[vid] = var.dim
            var_kinds[vid] = var.kind
            offset += var.dim
        return IndexMap(offsets, dims, offset, var_kinds)

    def total_cost(self, values=None, include_constraints: bool = False) -> float:
        """Sum of e^T Omega e over the graph's edges.

        Equality edges have an indefinite information matrix and are left
        out unless ``include_constraints`` is set.
        """
        values = self.values() if values is None else values
        cost = 0.0
        for eid in self.edge_ids():
            edge = self.edges[eid]
            if edge.is_constraint and not include_constraints:
                continue
            e = compute_error(edge, values)
            cost += float(e @ edge.information @ e)
        return cost

    def apply_step(self, index: IndexMap, step: np.ndarray) -> None:
        for vid, offset in index.offsets.items():
            var = self.variables[vid]
            var.value = var.value + step[offset : offset + var.dim]


def _check_information(information) -> np.ndarray:
    info = np.atleast_2d(np.array(information, dtype=float))
    if info.ndim != 2 or info.shape[0] != info.shape[1] or info.shape[0] < 1:
        raise InvalidInformation(f"information must be square, got shape {info.shape}")
    if not np.all(np.isfinite(info)):
        raise InvalidInformation("information matrix has non-finite entries")
    if np.max(np.abs(info - info.T)) > SYMMETRY_TOL:
        raise InvalidInformation("information matrix is not symmetric")
    return info


def _edge_args(edge: Edge, values) -> list[np.ndarray]:
    try:
        return [np.asarray(values[vid], dtype=float) for vid in edge.var_ids]
    except KeyError as exc:
        raise UnknownVariable(exc.args[0]) from None


def _eval_error(edge: Edge, args) -> np.ndarray:
    e = np.asarray(edge.error_fn(*args), dtype=float).reshape(-1)
    if e.shape[0] != edge.error_dim:
        raise InvalidDimension(
            f"edge {edge.id} error has length {e.shape[0]}, expected {edge.error_dim}"
        )
    return e


def compute_error(edge: Edge, values) -> np.ndarray:
    args = _edge_args(edge, values)
    try:
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            e = _eval_error(edge, args)
    except (ZeroDivisionError, OverflowError) as exc:
        raise NonFiniteError(f"edge {edge.id}: {exc}") from exc
    if not np.all(np.isfinite(e)):
        raise NonFiniteError(f"edge {edge.id} produced a non-finite error")
    return e


def finite_difference_jacobian(fn: ErrorFn, args: Sequence[np.ndarray], out_dim: int) -> list[np.ndarray]:
    """Central differences with step 1e-6 * max(1, |x_i|) per coordinate."""
    args = [np.array(a, dtype=float) for a in args]
    blocks = []
    for j, arg in enumerate(args):
        block = np.zeros((out_dim, arg.shape[0]))
        for i in range(arg.shape[0]):
            h = FD_REL_STEP * max(1.0, abs(arg[i]))
            plus = [a.copy() for a in args]
            minus = [a.copy() for a in args]
            plus[j][i] += h
            minus[j][i] -= h
            f_plus = np.asarray(fn(*plus), dtype=float).reshape(-1)
            f_minus = np.asarray(fn(*minus), dtype=float).reshape(-1)
            block[:, i] = (f_plus - f_minus) / (2.0 * h)
        blocks.append(block)
    return blocks


def compute_jacobian(edge: Edge, values) -> list[np.ndarray]:
    args = _edge_args(edge, values)
    if edge.jacobian_fn is not None:
        raw = edge.jacobian_fn(*args)
        blocks = [np.atleast_2d(np.asarray(b, dtype=float)) for b in raw]
    else:
        blocks = finite_difference_jacobian(
            lambda *a: _eval_error(edge, a), args, edge.error_dim
        )
    if len(blocks) != len(args):
        raise InvalidDimension(f"edge {edge.id} returned {len(blocks)} Jacobian blocks")
    for block, arg, vid in zip(blocks, args, edge.var_ids):
        if block.shape != (edge.error_dim, arg.shape[0]):
            raise InvalidDimension(
                f"edge {edge.id}: Jacobian block for variable {vid} has shape {block.shape}, "
                f"expected {(edge.error_dim, arg.shape[0])}"
            )
        if not np.all(np.isfinite(block)):
            raise NonFiniteJacobian(f"edge {edge.id} has a non-finite Jacobian")
    return blocks
