"""Assembly and solution of the global normal-equation system ``H dx = b``."""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .graph import FactorGraph, IndexMap, VariableKind, compute_error, compute_jacobian

PIVOT_REL_TOL = 1e-12


@dataclass
class LinearSystem:
    """Dense backing store with block access keyed by variable id."""

    H: np.ndarray
    b: np.ndarray
    index: IndexMap

    @property
    def dim(self) -> int:
        return self.b.shape[0]

    def block(self, row_var: int, col_var: int) -> np.ndarray:
        return self.H[self.index.slice(row_var), self.index.slice(col_var)]

    def rhs(self, var_id: int) -> np.ndarray:
        return self.b[self.index.slice(var_id)]


class SolveStatus(enum.Enum):
    SOLVED = "solved"
    SINGULAR = "singular"


@dataclass
class SolveReport:
    status: SolveStatus
    residual_norm: float
    step: np.ndarray | None = None

    @property
    def ok(self) -> bool:
        return self.status is SolveStatus.SOLVED


def edge_contribution(edge, values, index: IndexMap):
    """Local ``(H_j, b_j)`` of one edge, restricted to its free variables.

    Returns the list of participating variable ids alongside the blocks so
    the caller can scatter them.
    """
    e = compute_error(edge, values)
    blocks = compute_jacobian(edge, values)
    free = [(vid, J) for vid, J in zip(edge.var_ids, blocks) if vid in index]
    if not free:
        return [], np.zeros((0, 0)), np.zeros(0)
    J = np.hstack([blk for _, blk in free])
    omega_J = edge.information @ J
    H = J.T @ omega_J
    H = 0.5 * (H + H.T)
    b = -(omega_J.T @ e)
    return [vid for vid, _ in free], H, b


def _scatter(H_glob, b_glob, index: IndexMap, var_ids, H, b) -> None:
    idx = np.concatenate([np.arange(index.offsets[v], index.offsets[v] + index.dims[v]) for v in var_ids])
    H_glob[np.ix_(idx, idx)] += H
    b_glob[idx] += b


def assemble(graph: FactorGraph, index: IndexMap, values=None, edge_filter=None) -> LinearSystem:
    """Sum the per-edge Gauss-Newton contributions into a global system.

    ``edge_filter`` optionally selects which edges take part.
    """
    values = graph.values() if values is None else values
    n = index.total_dim
    H = np.zeros((n, n))
    b = np.zeros(n)
    for eid in graph.edge_ids():
        edge = graph.edges[eid]
        if edge_filter is not None and not edge_filter(edge):
            continue
        var_ids, H_j, b_j = edge_contribution(edge, values, index)
        if var_ids:
            _scatter(H, b, index, var_ids, H_j, b_j)
    return LinearSystem(H, b, index)


def is_primal(kind: VariableKind) -> bool:
    return kind is VariableKind.PRIMAL


def apply_damping(
    system: LinearSystem,
    lam: float,
    block_filter: Callable[[VariableKind], bool] | None = is_primal,
) -> LinearSystem:
    """Add ``lam`` to the diagonal of the blocks selected by ``block_filter``.

    The default touches primal variables only; ``None`` damps every block.
    """
    if lam < 0:
        raise ValueError(f"damping must be non-negative, got {lam}")
    H = system.H.copy()
    for vid in system.index.offsets:
        if block_filter is None or block_filter(system.index.kinds[vid]):
            sl = system.index.slice(vid)
            H[sl, sl] += lam * np.eye(sl.stop - sl.start)
    return LinearSystem(H, system.b.copy(), system.index)


def solve_symmetric_indefinite(H, b=None) -> SolveReport:
    """Solve ``H dx = b`` for symmetric, possibly indefinite ``H``.

    Uses LU with partial pivoting, so zero diagonal blocks (KKT structure)
    are fine.  A pivot below ``1e-12 * max|H|`` marks the system singular.
    Accepts a ``LinearSystem`` or a matrix/vector pair.
    """
    if isinstance(H, LinearSystem):
        H, b = H.H, H.b
    H = np.asarray(H, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1)
    n = b.shape[0]
    if H.shape != (n, n):
        raise ValueError(f"matrix shape {H.shape} does not match rhs length {n}")
    if n == 0:
        return SolveReport(SolveStatus.SOLVED, 0.0, np.zeros(0))
    scale = np.max(np.abs(H))
    if scale == 0.0 or not np.isfinite(scale):
        return SolveReport(SolveStatus.SINGULAR, float("inf"))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(H, check_finite=False)
    if np.min(np.abs(np.diag(lu))) < PIVOT_REL_TOL * scale:
        return SolveReport(SolveStatus.SINGULAR, float("inf"))
    x = scipy.linalg.lu_solve((lu, piv), b, check_finite=False)
    # one step of iterative refinement
    r = b - H @ x
    x = x + scipy.linalg.lu_solve((lu, piv), r, check_finite=False)
    residual = float(np.linalg.norm(H @ x - b))
    return SolveReport(SolveStatus.SOLVED, residual, x)
