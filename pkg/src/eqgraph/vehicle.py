"""Longitudinal vehicle velocity tracking as a factor-graph optimal control problem.

States are velocities ``x_1 .. x_{N-1}`` (m/s), inputs are traction forces
``u_0 .. u_{N-2}`` (N).  ``x_0`` is pinned to the first reference sample and
enters the first dynamics constraint as a constant.

    minimize   P (x_{N-1} - r_{N-1})^2 + sum_{k=1}^{N-2} Q (x_k - r_k)^2
               + sum_{k=0}^{N-2} R u_k^2
    subject to x_{k+1} = x_k + dt/m (u_k - F_resis(x_k)),  k = 0 .. N-2
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .constraints import add_equality_constraint, add_soft_constraint
from .errors import InvalidHorizon, InvalidInput
from .graph import FactorGraph


@dataclass(frozen=True)
class VehicleParams:
    """Defaults are representative passenger-car values."""

    m: float = 1700.0  # effective mass incl. rotating parts, kg
    m_v: float = 1600.0  # vehicle mass, kg
    g: float = 9.81
    theta: float = 0.0  # road slope, rad
    rho_a: float = 1.206  # air density, kg/m^3
    A_f: float = 2.4  # frontal area, m^2
    c_a: float = 0.32
    c_r: float = 0.009
    dt: float = 1.0

    def __post_init__(self):
        if self.m <= 0 or self.m_v <= 0 or self.dt <= 0:
            raise InvalidInput("m, m_v and dt must be positive")
        if min(self.g, self.rho_a, self.A_f, self.c_a, self.c_r) < 0:
            raise InvalidInput("physical coefficients must be non-negative")

    @property
    def air_coefficient(self) -> float:
        return 0.5 * self.rho_a * self.A_f * self.c_a

    @property
    def static_force(self) -> float:
        """Grade plus rolling resistance (velocity independent)."""
        return self.m_v * self.g * (math.sin(self.theta) + self.c_r * math.cos(self.theta))


@dataclass(frozen=True)
class OCPWeights:
    P: float = 1000.0
    Q: float = 1000.0
    R: float = 0.0007

    def __post_init__(self):
        if min(self.P, self.Q, self.R) <= 0:
            raise InvalidInput("weights must be positive")


@dataclass(frozen=True)
class ReferenceTrajectory:
    samples: np.ndarray
    dt: float = 1.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float).reshape(-1)
        object.__setattr__(self, "samples", samples)
        if samples.shape[0] < 2:
            raise InvalidHorizon(f"reference needs at least 2 samples, got {samples.shape[0]}")
        if not np.all(np.isfinite(samples)) or np.any(samples < 0):
            raise InvalidInput("reference samples must be finite and non-negative")
        if self.dt <= 0:
            raise InvalidInput("dt must be positive")

    def __len__(self) -> int:
        return self.samples.shape[0]


@dataclass(frozen=True)
class Nonlinear:
    """Quadratic air drag."""


@dataclass(frozen=True)
class Linearized:
    """Air drag with ``v^2`` replaced by ``p1 + p2 v``."""

    p1: float
    p2: float


DynamicsMode = Nonlinear | Linearized
NONLINEAR = Nonlinear()


def fit_linearization(v_nominal: float) -> tuple[float, float]:
    """Tangent line of ``v^2`` at ``v_nominal`` as ``(p1, p2)``."""
    if v_nominal < 0:
        raise InvalidInput("nominal velocity must be non-negative")
    return -(v_nominal**2), 2.0 * v_nominal


def _velocity_square(v, mode: DynamicsMode):
    if isinstance(mode, Linearized):
        return mode.p1 + mode.p2 * v
    return v * v


def _velocity_square_slope(v, mode: DynamicsMode):
    if isinstance(mode, Linearized):
        return mode.p2 + 0.0 * v
    return 2.0 * v


def resistance_force(v, params: VehicleParams, mode: DynamicsMode = NONLINEAR):
    """Grade + air drag + rolling resistance, in newtons."""
    return params.static_force + params.air_coefficient * _velocity_square(v, mode)


def resistance_force_derivative(v, params: VehicleParams, mode: DynamicsMode = NONLINEAR):
    return params.air_coefficient * _velocity_square_slope(v, mode)


def dynamics_step(x, u, params: VehicleParams, mode: DynamicsMode = NONLINEAR):
    return x + params.dt / params.m * (u - resistance_force(x, params, mode))


def rollout(u_sequence, x0: float, params: VehicleParams, mode: DynamicsMode = NONLINEAR) -> np.ndarray:
    """Forward-simulate; returns ``[x0, x1, ..., x_len(u)]``."""
    u_sequence = np.asarray(u_sequence, dtype=float).reshape(-1)
    xs = np.empty(u_sequence.shape[0] + 1)
    xs[0] = x0
    for k, u in enumerate(u_sequence):
        xs[k + 1] = dynamics_step(xs[k], u, params, mode)
    return xs


def rmse(a, b) -> float:
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.shape != b.shape:
        raise InvalidInput(f"trajectory lengths differ: {a.shape[0]} vs {b.shape[0]}")
    if a.size == 0:
        raise InvalidInput("empty trajectories")
    return float(np.sqrt(np.mean((a - b) ** 2)))


# -- edge functions ------------------------------------------------------------


def _dynamics_fns(params: VehicleParams, mode: DynamicsMode, x0: float | None):
    """Residual and Jacobian of ``x_{k+1} - step(x_k, u_k)``.

    Arguments are ``(x_k, u_k, x_next)``, or ``(u_k, x_next)`` when ``x0``
    is given as a constant for the first interval.
    """
    c = params.dt / params.m

    if x0 is None:

        def h(x, u, x_next):
            return x_next - dynamics_step(x, u, params, mode)

        def jac(x, u, x_next):
            dx = -1.0 + c * resistance_force_derivative(x, params, mode)
            return [np.atleast_2d(dx), np.array([[-c]]), np.array([[1.0]])]

    else:

        def h(u, x_next):
            return x_next - dynamics_step(x0, u, params, mode)

        def jac(u, x_next):
            return [np.array([[-c]]), np.array([[1.0]])]

    return h, jac


def _tracking_fns(target: float):
    def e(x):
        return x - target

    def jac(x):
        return [np.array([[1.0]])]

    return e, jac


def _input_error(u):
    return u


def _input_jacobian(u):
    return [np.array([[1.0]])]


# -- problem construction --------------------------------------------------------


class Method(enum.Enum):
    UNCONSTRAINED = "unconstrained"
    KKT = "kkt"
    AL = "al"
    SOFT = "soft"


@dataclass
class OCPProblem:
    reference: ReferenceTrajectory
    params: VehicleParams = field(default_factory=VehicleParams)
    weights: OCPWeights = field(default_factory=OCPWeights)
    mode: DynamicsMode = NONLINEAR

    def __post_init__(self):
        if abs(self.reference.dt - self.params.dt) > 1e-12:
            raise InvalidInput(
                f"reference dt {self.reference.dt} does not match vehicle dt {self.params.dt}"
            )

    @property
    def horizon(self) -> int:
        return len(self.reference)

    @property
    def x0(self) -> float:
        return float(self.reference.samples[0])


@dataclass
class OCPGraph:
    problem: OCPProblem
    method: Method
    graph: FactorGraph
    state_ids: list[int]
    input_ids: list[int]
    dynamics_edge_ids: list[int] = field(default_factory=list)
    multiplier_ids: list[int] = field(default_factory=list)

    def velocities(self, values=None) -> np.ndarray:
        """Full velocity trajectory ``[x_0, x_1, ..., x_{N-1}]``."""
        values = self.graph.values() if values is None else values
        return np.array([self.problem.x0] + [values[i][0] for i in self.state_ids])

    def inputs(self, values=None) -> np.ndarray:
        values = self.graph.values() if values is None else values
        return np.array([values[i][0] for i in self.input_ids])

    def dynamics_residual(self, values=None) -> np.ndarray:
        """``x_{k+1} - step(x_k, u_k)`` for every interval under the problem's dynamics."""
        xs = self.velocities(values)
        us = self.inputs(values)
        p = self.problem
        return xs[1:] - dynamics_step(xs[:-1], us, p.params, p.mode)

    def objective(self, values=None) -> float:
        return self.graph.total_cost(values)


def default_initial_guess(problem: OCPProblem) -> tuple[np.ndarray, np.ndarray]:
    """Cold start: every state held at ``x_0``, every input zero."""
    n = problem.horizon - 1
    return np.full(n, problem.x0), np.zeros(n)


def build_ocp_graph(
    problem: OCPProblem,
    method: Method = Method.KKT,
    soft_weight: float | None = None,
    initial: tuple[np.ndarray, np.ndarray] | None = None,
) -> OCPGraph:
    """Factor graph of the tracking problem for the chosen constraint method.

    KKT and AL graphs are identical: both carry the dynamics as constraint
    edges with multiplier nodes; the solver decides how to treat them.
    Soft uses weighted cost edges, Unconstrained drops the dynamics.
    """
    n = problem.horizon
    if n < 2:
        raise InvalidHorizon(f"horizon must be at least 2, got {n}")
    if method is Method.SOFT and soft_weight is None:
        raise InvalidInput("soft method needs a weight")
    params, weights, mode = problem.params, problem.weights, problem.mode
    r = problem.reference.samples
    x_init, u_init = default_initial_guess(problem) if initial is None else initial

    graph = FactorGraph()
    ocp = OCPGraph(problem, method, graph, [], [])
    prev_state = None
    for k in range(n - 1):
        u_id = graph.add_variable(1, [u_init[k]])
        x_id = graph.add_variable(1, [x_init[k]])
        ocp.input_ids.append(u_id)
        ocp.state_ids.append(x_id)

        if prev_state is None:
            h, h_jac = _dynamics_fns(params, mode, problem.x0)
            var_ids = [u_id, x_id]
        else:
            h, h_jac = _dynamics_fns(params, mode, None)
            var_ids = [prev_state, u_id, x_id]
        if method in (Method.KKT, Method.AL):
            eid, mid = add_equality_constraint(graph, var_ids, h, 1, h_jac)
            ocp.dynamics_edge_ids.append(eid)
            ocp.multiplier_ids.append(mid)
        elif method is Method.SOFT:
            ocp.dynamics_edge_ids.append(
                add_soft_constraint(graph, var_ids, h, 1, soft_weight, h_jac)
            )
        prev_state = x_id

    for k, (u_id, x_id) in enumerate(zip(ocp.input_ids, ocp.state_ids)):
        step = k + 1
        weight = weights.P if step == n - 1 else weights.Q
        e, e_jac = _tracking_fns(float(r[step]))
        graph.add_edge([x_id], e, [[weight]], e_jac)
        graph.add_edge([u_id], _input_error, [[weights.R]], _input_jacobian)
    return ocp


# -- reference I/O ---------------------------------------------------------------


def load_reference_csv(path: str | Path) -> ReferenceTrajectory:
    """Read a ``t,velocity`` CSV sampled at a fixed rate."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["t", "velocity"]:
            raise InvalidInput(f"{path}: expected header 't,velocity', got {reader.fieldnames}")
        rows = [(float(row["t"]), float(row["velocity"])) for row in reader]
    if len(rows) < 2:
        raise InvalidHorizon(f"{path}: need at least 2 samples")
    t = np.array([row[0] for row in rows])
    steps = np.diff(t)
    if np.any(steps <= 0):
        raise InvalidInput(f"{path}: t must be strictly increasing")
    dt = float(steps[0])
    if not np.allclose(steps, dt, rtol=1e-9, atol=1e-9):
        raise InvalidInput(f"{path}: samples are not evenly spaced")
    return ReferenceTrajectory(np.array([row[1] for row in rows]), dt)


def save_reference_csv(ref: ReferenceTrajectory, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "velocity"])
        for k, v in enumerate(ref.samples):
            writer.writerow([repr(k * ref.dt), repr(float(v))])
