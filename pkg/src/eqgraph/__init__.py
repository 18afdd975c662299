"""Factor-graph least squares with equality constraints.

Constraints are enforced either as KKT edges (multiplier nodes plus an
antidiagonal information matrix, solved by plain Gauss-Newton) or with an
augmented Lagrangian loop.
"""

from .constraints import (
    ALConfig,
    EqualityEdge,
    PenaltyState,
    add_equality_constraint,
    add_soft_constraint,
    al_inner_step,
    al_update_multipliers,
    al_update_penalty,
    equality_edge_contribution,
    max_constraint_violation,
    optimize_augmented_lagrangian,
    optimize_kkt_gauss_newton,
)
from .errors import (
    GraphError,
    InvalidDimension,
    InvalidHorizon,
    InvalidInformation,
    InvalidInput,
    InvalidWeight,
    NonFiniteError,
    NonFiniteJacobian,
    SingularSystemError,
    UnknownVariable,
)
from .graph import Edge, FactorGraph, IndexMap, VariableKind, VariableNode, compute_error, compute_jacobian
from .linear import LinearSystem, SolveReport, SolveStatus, apply_damping, assemble, solve_symmetric_indefinite
from .solvers import (
    IterationStats,
    SolverConfig,
    Termination,
    check_termination,
    optimize_gauss_newton,
    optimize_levenberg_marquardt,
)

__version__ = "0.1.0"
