import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eqgraph import (
    ALConfig,
    FactorGraph,
    InvalidDimension,
    InvalidWeight,
    PenaltyState,
    SolverConfig,
    Termination,
    UnknownVariable,
    VariableKind,
    add_equality_constraint,
    add_soft_constraint,
    al_inner_step,
    al_update_multipliers,
    al_update_penalty,
    assemble,
    compute_jacobian,
    equality_edge_contribution,
    optimize_augmented_lagrangian,
    optimize_gauss_newton,
    optimize_kkt_gauss_newton,
)
from eqgraph.constraints import constraint_jacobian, equality_information

from kkt_cases import permutation, random_case
from oracles import al_scalar_oracle

EYE = lambda *a: [np.eye(1)]  # noqa: E731


def circle_graph(target=0.8):
    g = FactorGraph()
    p = g.add_variable(2, [1.0, 0.5])
    g.add_edge([p], lambda v: v - target, np.eye(2), lambda v: [np.eye(2)])
    add_equality_constraint(g, [p], lambda v: np.array([v @ v - 1]), 1, lambda v: [2 * v.reshape(1, 2)])
    return g, p


def toy(x0=0.0, with_constraint=True):
    """min x^2 s.t. x = 1."""
    g = FactorGraph()
    x = g.add_variable(1, [x0])
    g.add_edge([x], lambda v: v, [[1.0]], EYE)
    mid = None
    if with_constraint:
        _, mid = add_equality_constraint(g, [x], lambda v: v - 1, 1, EYE)
    return g, x, mid


class TestAddEqualityConstraint:
    def test_scalar(self):
        g = FactorGraph()
        x = g.add_variable(1, [0.0])
        eid, mid = add_equality_constraint(g, [x], lambda v: v - 1, 1)
        edge = g.edges[eid]
        assert edge.error_dim == 2
        np.testing.assert_array_equal(edge.information, [[0, 1], [1, 0]])
        assert g.variables[mid].kind is VariableKind.MULTIPLIER
        np.testing.assert_array_equal(g.variables[mid].value, [0.0])
        assert edge.var_ids == (x, mid)

    def test_two_dimensional(self):
        g = FactorGraph()
        x = g.add_variable(2, [0.0, 0.0])
        eid, mid = add_equality_constraint(g, [x], lambda v: v - 1, 2)
        info = g.edges[eid].information
        assert info.shape == (4, 4)
        np.testing.assert_array_equal(info[:2, 2:], np.eye(2))
        np.testing.assert_array_equal(info[2:, :2], np.eye(2))
        assert np.all(info[:2, :2] == 0) and np.all(info[2:, 2:] == 0)
        assert g.variables[mid].dim == 2

    def test_unknown_variable(self):
        with pytest.raises(UnknownVariable):
            add_equality_constraint(FactorGraph(), [5], lambda v: v, 1)

    def test_bad_dimension(self):
        g = FactorGraph()
        x = g.add_variable(1, [0.0])
        with pytest.raises(InvalidDimension):
            add_equality_constraint(g, [x], lambda v: v, 0)

    def test_stacked_jacobian(self):
        g = FactorGraph()
        a = g.add_variable(2, [1.0, 2.0])
        b = g.add_variable(1, [3.0])
        eid, _ = add_equality_constraint(g, [a, b], lambda x, y: np.array([x[0] * y[0], x[1] - y[0]]), 2)
        Ja, Jb, Jg = compute_jacobian(g.edges[eid], g.values())
        np.testing.assert_allclose(Ja, [[3, 0], [0, 1], [0, 0], [0, 0]], atol=1e-8)
        np.testing.assert_allclose(Jb, [[1], [-1], [0], [0]], atol=1e-8)
        np.testing.assert_array_equal(Jg, np.vstack([np.zeros((2, 2)), np.eye(2)]))

    def test_information_helper(self):
        np.testing.assert_array_equal(equality_information(1), [[0, 1], [1, 0]])


class TestEqualityContribution:
    def _edge(self, x0, gamma, h):
        g = FactorGraph()
        x = g.add_variable(1, [x0])
        eid, _ = add_equality_constraint(g, [x], h, 1, initial_multiplier=[gamma])
        return g.edges[eid], g.values()

    def test_hand_values(self):
        # h(x) = 2x - 1.5 at x = 1: h = 0.5, J_h = 2; gamma = 3
        edge, values = self._edge(1.0, 3.0, lambda v: 2 * v - 1.5)
        var_ids, H, b = equality_edge_contribution(edge, values)
        np.testing.assert_allclose(H, [[0, 2], [2, 0]], atol=1e-9)
        np.testing.assert_allclose(b, [-6.0, -0.5], atol=1e-8)

    def test_zero_multiplier_and_residual(self):
        edge, values = self._edge(1.0, 0.0, lambda v: v - 1)
        _, _, b = equality_edge_contribution(edge, values)
        np.testing.assert_array_equal(b, [0.0, 0.0])

    def test_satisfied_constraint(self):
        edge, values = self._edge(4.2, -7.0, lambda v: v - 4.2)
        _, _, b = equality_edge_contribution(edge, values)
        assert b[1] == 0.0


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_kkt_equivalence_property(seed):
    case = random_case(seed)
    index = case.graph.build_index()
    system = assemble(case.graph, index)
    perm = permutation(case, index)
    np.testing.assert_allclose(system.H[np.ix_(perm, perm)], case.K, atol=1e-12, rtol=0)
    np.testing.assert_allclose(system.b[perm], case.rhs, atol=1e-12, rtol=0)


class TestKKTGaussNewton:
    def test_toy(self):
        g, x, mid = toy()
        values, stats = optimize_kkt_gauss_newton(g)
        assert stats.iterations == 2
        assert abs(values[x][0] - 1) <= 1e-10 and abs(values[mid][0] + 1) <= 1e-10
        assert stats.constraint_violation <= 1e-12

    def test_first_iteration(self):
        g, x, mid = toy()
        _, stats = optimize_kkt_gauss_newton(g, SolverConfig(max_iterations=1))
        assert g.variables[x].value[0] == pytest.approx(1.0, abs=1e-14)
        assert g.variables[mid].value[0] == pytest.approx(-1.0, abs=1e-14)

    def test_no_constraints_reduces_to_gn(self):
        g1, x1, _ = toy(x0=2.0, with_constraint=False)
        g2, x2, _ = toy(x0=2.0, with_constraint=False)
        v1, s1 = optimize_kkt_gauss_newton(g1)
        v2, s2 = optimize_gauss_newton(g2)
        np.testing.assert_array_equal(v1[x1], v2[x2])
        assert s1.iterations == s2.iterations and s1.step_norms == s2.step_norms

    def test_duplicate_constraints_fail(self):
        g, x, _ = toy()
        add_equality_constraint(g, [x], lambda v: v - 1, 1, EYE)
        _, stats = optimize_kkt_gauss_newton(g)
        assert stats.termination is Termination.SOLVER_FAILURE

    def test_circle(self):
        # min (a-0.8)^2 + (b-0.8)^2 s.t. a^2 + b^2 = 1  ->  a = b = 1/sqrt(2)
        g, p = circle_graph()
        values, stats = optimize_kkt_gauss_newton(g)
        assert stats.termination is Termination.STEP_TOLERANCE
        np.testing.assert_allclose(values[p], [2**-0.5] * 2, atol=1e-6)

    def test_gauss_newton_ignores_constraint_curvature(self):
        # target far outside the circle: multiplier * curvature outweighs the
        # cost curvature and the undamped iteration does not settle
        g, _ = circle_graph(target=2.0)
        _, stats = optimize_kkt_gauss_newton(g, SolverConfig(max_iterations=30))
        assert stats.termination is not Termination.STEP_TOLERANCE

    def test_first_order_optimality(self):
        # min |x - c|^2 over R^3 s.t. two nonlinear constraints
        c = np.array([1.0, 2.0, 3.0])
        g = FactorGraph()
        x = g.add_variable(3, [0.5, 0.5, 0.5])
        g.add_edge([x], lambda v: v - c, np.eye(3), lambda v: [np.eye(3)])
        h = lambda v: np.array([v[0] * v[1] - 1.0, v[0] + v[1] + v[2] ** 2 - 3.0])  # noqa: E731
        Jh = lambda v: [np.array([[v[1], v[0], 0], [1, 1, 2 * v[2]]])]  # noqa: E731
        _, mid = add_equality_constraint(g, [x], h, 2, Jh)
        values, stats = optimize_kkt_gauss_newton(g)
        assert stats.termination is Termination.STEP_TOLERANCE
        xs, gam = values[x], values[mid]
        assert np.max(np.abs(h(xs))) <= 1e-6
        grad = (xs - c) + Jh(xs)[0].T @ gam
        assert np.max(np.abs(grad)) <= 1e-5


class TestSoftConstraint:
    def test_closed_form(self):
        w = 1e6
        g, x, _ = toy(with_constraint=False)
        add_soft_constraint(g, [x], lambda v: v - 1, 1, w, EYE)
        values, _ = optimize_gauss_newton(g)
        assert values[x][0] == pytest.approx(w / (1 + w), abs=1e-12)

    @pytest.mark.parametrize("w", [0.0, -1.0, float("nan")])
    def test_invalid_weight(self, w):
        g, x, _ = toy(with_constraint=False)
        with pytest.raises(InvalidWeight):
            add_soft_constraint(g, [x], lambda v: v - 1, 1, w)

    def test_approaches_hard_solution(self):
        gaps = []
        for w in (1e0, 1e2, 1e4, 1e6, 1e8):
            g, x, _ = toy(with_constraint=False)
            add_soft_constraint(g, [x], lambda v: v - 1, 1, w, EYE)
            gaps.append(abs(optimize_gauss_newton(g)[0][x][0] - 1.0))
        assert all(b < a for a, b in zip(gaps, gaps[1:]))
        assert gaps[-1] < 1e-7


class TestALPieces:
    def test_inner_step_hand_values(self):
        g, x, mid = toy()
        step = al_inner_step(g, PenaltyState.from_graph(g, 10.0))
        np.testing.assert_allclose(step, [10 / 11], rtol=1e-14)
        assert g.variables[mid].value[0] == 0.0

    def test_inner_step_without_penalty_is_gn(self):
        g, x, _ = toy(x0=2.0)
        g_free, x_free, _ = toy(x0=2.0, with_constraint=False)
        state = PenaltyState(0.0, {eid: np.zeros(1) for eid in g.edges if g.edges[eid].is_constraint})
        step = al_inner_step(g, state)
        free_step = optimize_gauss_newton(g_free, SolverConfig(max_iterations=1))[0][x_free] - 2.0
        np.testing.assert_allclose(step, free_step)

    def test_inner_step_on_feasible_point(self):
        # h = 0 and gamma = 0: the penalty adds nothing to b, only rho J^T J to H
        g, x, _ = toy(x0=1.0)
        step = al_inner_step(g, PenaltyState.from_graph(g, 10.0))
        np.testing.assert_allclose(step, [-1.0 / 11.0], rtol=1e-14)

    def test_inner_step_at_constrained_optimum_of_cost(self):
        # feasible and unconstrained-optimal: both steps are zero
        g = FactorGraph()
        x = g.add_variable(1, [1.0])
        g.add_edge([x], lambda v: v - 1, [[1.0]], EYE)
        add_equality_constraint(g, [x], lambda v: v - 1, 1, EYE)
        step = al_inner_step(g, PenaltyState.from_graph(g, 10.0))
        np.testing.assert_array_equal(step, [0.0])

    def test_multiplier_update(self):
        s = al_update_multipliers(PenaltyState(10.0, {0: np.zeros(1)}), {0: np.array([0.5])})
        np.testing.assert_array_equal(s.multipliers[0], [5.0])

    def test_multiplier_fixed_point(self):
        s = al_update_multipliers(PenaltyState(10.0, {0: np.array([2.5])}), {0: np.zeros(1)})
        np.testing.assert_array_equal(s.multipliers[0], [2.5])

    def test_multiplier_vector(self):
        s = al_update_multipliers(PenaltyState(2.0, {0: np.array([1.0, -1.0])}), {0: np.array([0.5, 0.5])})
        np.testing.assert_array_equal(s.multipliers[0], [2.0, 0.0])

    @pytest.mark.parametrize(
        "rho, alpha, expected", [(10.0, 10.0, 100.0), (10000.0, 10.0, 50000.0), (10.0, 1.0, 10.0)]
    )
    def test_penalty_update(self, rho, alpha, expected):
        cfg = ALConfig(rho_init=min(rho, 10.0), alpha=alpha)
        assert al_update_penalty(PenaltyState(rho), cfg).rho == expected

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ALConfig(rho_init=100.0, rho_max=10.0)
        with pytest.raises(ValueError):
            ALConfig(alpha=0.5)


class TestAugmentedLagrangian:
    def test_toy_matches_scripted_oracle(self):
        cfg = ALConfig()
        x_ref, gamma_ref, iters_ref = al_scalar_oracle(cfg.rho_init, cfg.rho_max, cfg.alpha, 1e-6)
        g, x, mid = toy()
        values, stats = optimize_augmented_lagrangian(g, cfg)
        assert stats.termination is Termination.STEP_TOLERANCE
        assert stats.iterations == iters_ref
        assert values[x][0] == pytest.approx(x_ref, abs=1e-12)
        assert values[mid][0] == pytest.approx(gamma_ref, abs=1e-12)
        assert abs(values[x][0] - 1) <= 1e-4
        assert stats.constraint_violation <= 1e-6

    def test_no_constraints(self):
        g, x, _ = toy(x0=2.0, with_constraint=False)
        g_gn, _, _ = toy(x0=2.0, with_constraint=False)
        values, stats = optimize_augmented_lagrangian(g)
        _, gn_stats = optimize_gauss_newton(g_gn)
        assert stats.iterations == gn_stats.iterations == 2
        assert values[x][0] == 0.0

    def test_multiplier_initial_value_read_from_node(self):
        g, x, mid = toy()
        g.variables[mid].set_value([-0.9])
        values, stats = optimize_augmented_lagrangian(g)
        assert values[mid][0] == pytest.approx(-1.0, abs=1e-6)

    def test_agrees_with_kkt(self):
        cfg = ALConfig()
        g1, x1, m1 = toy()
        g2, x2, m2 = toy()
        kv, _ = optimize_kkt_gauss_newton(g1)
        av, _ = optimize_augmented_lagrangian(g2, cfg)
        assert abs(kv[x1][0] - av[x2][0]) <= 10 * max(cfg.constraint_tol, cfg.step_norm_tol)
        assert np.sign(kv[m1][0]) == np.sign(av[m2][0])
        assert abs(av[m2][0] - kv[m1][0]) <= 1e-3 * abs(kv[m1][0])

    def test_outer_limit(self):
        g, _, _ = toy()
        _, stats = optimize_augmented_lagrangian(g, ALConfig(outer_max_iterations=2))
        assert stats.termination is Termination.MAX_ITERATIONS
        assert stats.iterations == 2

    def test_inner_loop_counts_solves(self):
        g, _, _ = toy()
        _, stats = optimize_augmented_lagrangian(g, ALConfig(inner_max_iterations=3))
        assert stats.iterations == len(stats.step_norms)
        assert stats.termination is Termination.STEP_TOLERANCE

    def test_nonlinear_agreement(self):
        g1, p1 = circle_graph()
        g2, p2 = circle_graph()
        kv, _ = optimize_kkt_gauss_newton(g1)
        av, stats = optimize_augmented_lagrangian(g2)
        assert stats.termination is Termination.STEP_TOLERANCE
        np.testing.assert_allclose(av[p2], kv[p1], atol=1e-5)

    def test_constraint_jacobian_helper(self):
        g, x, _ = toy(x0=3.0)
        edge = next(e for e in g.edges.values() if e.is_constraint)
        (J,) = constraint_jacobian(edge, g.values())
        np.testing.assert_array_equal(J, [[1.0]])
