"""Backward solver, nonlinear expectations, comparison, linear measures."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conicfin import (
    MeasureNotEquivalent,
    PreconditionViolated,
    builtin_driver,
    build_tree,
    compare_solutions,
    detect_linear_driver,
    diagnose_solution,
    extract_linear_measure,
    g_expectation,
    martingale_from_increments,
    solve_bsde,
    symmetric_random_walk,
    uniform_binary_tree,
)

import oracles

SOLVER_ATOL = 1e-10
ORACLE_ATOL = 1e-9


def make_walk(horizon=3):
    return symmetric_random_walk(uniform_binary_tree(horizon))


@given(
    st.integers(min_value=1, max_value=4),
    st.sampled_from(["zero", "coherent_abs", "logsumexp", "entropic"]),
    st.integers(min_value=0, max_value=2**31 - 1),
)
@settings(max_examples=40, deadline=None)
def test_vectorized_solver_matches_scalar_recursion(horizon, kind, seed):
    walk = make_walk(horizon)
    params = {"coherent_abs": {"c": 0.6}, "logsumexp": {"K": 1.5}, "entropic": {"gamma": 1.2}}
    g = builtin_driver(kind, walk, **params.get(kind, {}))
    rng = np.random.default_rng(seed)
    terminal = rng.normal(size=walk.tree.n_leaves)
    sol = solve_bsde(g, terminal, walk)
    want = oracles.brute_force_solve(g, terminal, walk)
    for t in range(horizon + 1):
        assert np.max(np.abs(sol.Y[t] - want[t])) < SOLVER_ATOL


def test_entropic_solution_matches_closed_form_at_every_node():
    walk = make_walk(4)
    rng = np.random.default_rng(3)
    X = rng.normal(size=walk.tree.n_leaves)
    for gamma in (0.5, 1.0, 2.0):
        g = builtin_driver("entropic", walk, gamma=gamma)
        sol = solve_bsde(g, X, walk)
        for t in range(5):
            want = oracles.entropic_conditional(walk.tree, X, t, gamma)
            assert np.max(np.abs(sol.Y[t] - want)) < ORACLE_ATOL


def test_solution_diagnostics_are_machine_small():
    walk = make_walk(3)
    rng = np.random.default_rng(5)
    g = builtin_driver("entropic", walk, gamma=0.7)
    sol = solve_bsde(g, rng.normal(size=8), walk)
    diag = diagnose_solution(sol, g, walk)
    assert diag.bsde_residual < SOLVER_ATOL
    assert diag.orthogonality_residual < SOLVER_ATOL
    assert diag.remainder_mean_residual < SOLVER_ATOL


def test_remainder_vanishes_under_predictable_representation():
    walk = make_walk(3)
    rng = np.random.default_rng(6)
    g = builtin_driver("coherent_abs", walk, c=0.4)
    sol = solve_bsde(g, rng.normal(size=8), walk)
    diag = diagnose_solution(sol, g, walk)
    assert diag.remainder_sup < SOLVER_ATOL


def test_remainder_nonzero_without_representation():
    tree = build_tree([[1 / 3, 1 / 3, 1 / 3], [0.5, 0.5]])
    inc = [
        None,
        np.array([1.5, 0.0, -1.5]),
        np.array([1.0, -1.0] * 3),
    ]
    walk = martingale_from_increments(tree, inc)
    rng = np.random.default_rng(7)
    g = builtin_driver("zero", walk)
    sol = solve_bsde(g, rng.normal(size=tree.n_leaves), walk)
    diag = diagnose_solution(sol, g, walk)
    assert diag.bsde_residual < SOLVER_ATOL
    assert diag.remainder_sup > 1e-3


def test_batched_terminals_solve_together():
    walk = make_walk(2)
    rng = np.random.default_rng(8)
    g = builtin_driver("entropic", walk, gamma=1.0)
    batch = rng.normal(size=(5, 4))
    sol = solve_bsde(g, batch, walk)
    assert sol.Y[0].shape == (5, 1)
    for i in range(5):
        single = solve_bsde(g, batch[i], walk)
        assert np.max(np.abs(sol.Y[0][i] - single.Y[0])) < SOLVER_ATOL


def test_g_expectation_constants_and_tower():
    walk = make_walk(3)
    g = builtin_driver("logsumexp", walk, K=2.0)
    const = np.full(walk.tree.n_leaves, 3.25)
    y = g_expectation(g, const, 3, 0, walk)
    assert abs(float(y[0]) - 3.25) < SOLVER_ATOL
    rng = np.random.default_rng(9)
    X = rng.normal(size=8)
    inner = g_expectation(g, X, 3, 2, walk)
    nested = g_expectation(g, inner, 2, 0, walk)
    direct = g_expectation(g, X, 3, 0, walk)
    assert np.max(np.abs(nested - direct)) < SOLVER_ATOL


def test_comparison_orders_solutions_with_dominating_driver():
    walk = make_walk(3)
    g1 = builtin_driver("entropic", walk, gamma=1.0)
    g2 = builtin_driver("zero", walk)
    rng = np.random.default_rng(10)
    x2 = rng.normal(size=8)
    x1 = x2 + np.abs(rng.normal(size=8))
    rep = compare_solutions(g1, g2, x1, x2, walk)
    assert rep.ordering_ok
    assert rep.min_gap >= -1e-12


def test_comparison_strictness_propagates_equality():
    walk = make_walk(3)
    g = builtin_driver("coherent_abs", walk, c=0.5)
    rng = np.random.default_rng(11)
    x2 = rng.normal(size=8)
    bump = np.abs(rng.normal(size=8))
    bump[:4] = 0.0
    rep = compare_solutions(g, g, x2 + bump, x2, walk)
    assert rep.ordering_ok
    assert rep.strictness_ok
    assert rep.equality_nodes == 7


def test_comparison_rejects_unordered_terminals():
    walk = make_walk(2)
    g = builtin_driver("zero", walk)
    with pytest.raises(PreconditionViolated):
        compare_solutions(g, g, np.array([1.0, 0, 0, 0]), np.array([2.0, 0, 0, 0]), walk)


def test_comparison_rejects_undominated_driver_pair():
    walk = make_walk(2)
    small = builtin_driver("coherent_abs", walk, c=0.2)
    big = builtin_driver("coherent_abs", walk, c=0.8)
    x = np.ones(4)
    with pytest.raises(PreconditionViolated):
        compare_solutions(small, big, x + 1.0, x, walk)


def test_comparison_rejects_irregular_dominating_driver():
    from conicfin.drivers import CallableDriver

    walk = make_walk(2)
    steep = CallableDriver(walk, lambda t, z: 1.5 * np.abs(z), lipschitz_const=1.5, convex=True)
    zero = builtin_driver("zero", walk)
    with pytest.raises(PreconditionViolated):
        compare_solutions(steep, zero, np.ones(4), np.zeros(4), walk)


def test_linear_driver_reduces_to_reweighted_expectation():
    walk = make_walk(3)
    slopes = [None, 0.5, -0.3, 0.8]
    g = builtin_driver("linear", walk, slopes=slopes[1:])
    rng = np.random.default_rng(12)
    X = rng.normal(size=8)
    got = g_expectation(g, X, 3, 0, walk)
    want = oracles.reweighted_expectation(walk, slopes, X, 0)
    assert np.max(np.abs(got - want)) < 1e-12


def test_frozen_linear_measure_weights():
    walk = make_walk(1)
    g = builtin_driver("linear", walk, slope=0.5)
    mq = extract_linear_measure(g, walk)
    assert np.allclose(mq.tree_q.branch_prob[1], [0.75, 0.25], atol=1e-12)


def test_linear_measure_requires_equivalent_weights():
    walk = make_walk(2)
    g = builtin_driver("linear", walk, slope=1.0)
    with pytest.raises(MeasureNotEquivalent):
        extract_linear_measure(g, walk)


def test_detect_linear_driver_roundtrip():
    walk = make_walk(3)
    g = builtin_driver("linear", walk, slopes=[0.4, -0.2, 0.1])
    found = detect_linear_driver(g, walk)
    assert found is not None
    for t, want in ((1, 0.4), (2, -0.2), (3, 0.1)):
        assert np.max(np.abs(found[t] - want)) < 1e-9
    assert detect_linear_driver(builtin_driver("entropic", walk, gamma=1.0), walk) is None
