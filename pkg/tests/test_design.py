import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import closed_form_2d, fd_constraint_gradient, grid_allocation_value, random_2d_instance

from linbandit.conc import Thresholds
from linbandit.design import (
    barycentric_spanner,
    constraint_gradient,
    constraint_value,
    lower_bound_constant,
    naive_bound,
    pull_plan,
    solve_allocation,
    spanner_coefficients,
    truncated_plan,
)
from linbandit.errors import NonUniqueOptimum, RankDeficient
from linbandit.instances import ActionSet, Instance, compute_gaps, counterexample, example2, finite_armed


def test_spanner_of_standard_basis():
    sp = barycentric_spanner(ActionSet(np.eye(3)))
    assert sorted(sp.indices) == [0, 1, 2] and sp.C == 1.0


def test_spanner_example2():
    inst = example2(2, 0.01)
    sp = barycentric_spanner(inst.actions)
    assert sorted(sp.indices) == [0, 1]
    coef = spanner_coefficients(inst.arms[2], barycentric_spanner(inst.actions), inst.actions)
    order = np.argsort(sp.indices)
    np.testing.assert_allclose(coef[order], [0.99, 0.02], atol=1e-12)


def test_spanner_coefficients_members_and_basis():
    actions = ActionSet(np.eye(3))
    sp = barycentric_spanner(actions)
    c = spanner_coefficients([1, 0, 0], sp, actions)
    assert sorted(np.abs(c).tolist()) == [0, 0, 1]
    rng = np.random.default_rng(3)
    actions = ActionSet(rng.normal(size=(10, 3)))
    sp = barycentric_spanner(actions)
    for pos, i in enumerate(sp.indices):
        expect = np.zeros(3)
        expect[pos] = 1
        np.testing.assert_allclose(spanner_coefficients(actions.arms[i], sp, actions), expect, atol=1e-12)


@pytest.mark.parametrize("C", [1.0, 1.5, 3.0])
def test_spanner_property_random_unit_arms(C):
    rng = np.random.default_rng(int(C * 10))
    arms = rng.normal(size=(50, 4))
    arms /= np.linalg.norm(arms, axis=1, keepdims=True)
    actions = ActionSet(arms)
    sp = barycentric_spanner(actions, C)
    coef = np.array([spanner_coefficients(x, sp, actions) for x in arms])
    assert np.abs(coef).max() <= C + 1e-9


def test_spanner_rank_deficient():
    with pytest.raises(RankDeficient):
        barycentric_spanner(ActionSet([[1, 0], [2, 0], [3, 0]]))
    with pytest.raises(ValueError):
        barycentric_spanner(ActionSet(np.eye(2)), 0.5)


def test_solve_finite_armed_two():
    a = solve_allocation(ActionSet(np.eye(2)), compute_gaps(finite_armed([1, 0])))
    assert a.value == pytest.approx(2, rel=1e-4)
    assert a.weights[1] == pytest.approx(2, rel=1e-4)
    assert a.optimal_arm_unbounded
    assert np.all(a.residuals <= 1e-6)


def test_example2_values():
    assert lower_bound_constant(example2(2, 1e-3)) == pytest.approx(8, rel=0.01)
    inst = example2(2, 1e-2)
    dropped = Instance(inst.actions.without(1), inst.theta)
    assert lower_bound_constant(dropped) == pytest.approx(200, rel=0.01)


def test_counterexample_value():
    assert lower_bound_constant(counterexample(1, 1e-3)) == pytest.approx(128, rel=0.01)
    assert lower_bound_constant(counterexample(0.5, 1e-3)) == pytest.approx(32, rel=0.01)


def test_doubling_gaps_halves_value():
    theta = np.array([1.0, 0.6, 0.3, 0.8])
    v1 = lower_bound_constant(finite_armed(theta))
    v2 = lower_bound_constant(finite_armed(2 * theta))
    assert v2 == pytest.approx(v1 / 2, rel=1e-3)
    assert v1 == pytest.approx(sum(2 / g for g in [0.4, 0.7, 0.2]), rel=1e-3)


def test_tie_raises():
    with pytest.raises(NonUniqueOptimum):
        lower_bound_constant(Instance(ActionSet(np.eye(2)), [1, 1]))


def test_cap_insensitivity():
    inst = counterexample(1, 1e-2)
    g = compute_gaps(inst)
    v1 = solve_allocation(inst.actions, g, cap_factor=1e6, check_factor=None).value
    v2 = solve_allocation(inst.actions, g, cap_factor=2e6, check_factor=None).value
    vinf = solve_allocation(inst.actions, g, cap_factor=math.inf).value
    assert abs(v2 - v1) <= 1e-3 * v1
    assert abs(vinf - v1) <= 1e-3 * v1


def test_grid_oracle_on_a_few_instances():
    rng = np.random.default_rng(17)
    for _ in range(4):
        arms, theta = random_2d_instance(rng)
        inst = Instance(ActionSet(arms), theta)
        a = solve_allocation(inst.actions, compute_gaps(inst))
        assert a.value == pytest.approx(grid_allocation_value(arms, theta), rel=0.02)
        assert a.value == pytest.approx(closed_form_2d(arms, theta), rel=1e-3)
        assert a.residuals.max() <= 1e-6


def test_closed_form_2d_more_arms():
    rng = np.random.default_rng(23)
    for k in (2, 4, 6):
        arms, theta = random_2d_instance(rng, k=k)
        inst = Instance(ActionSet(arms), theta)
        assert lower_bound_constant(inst) == pytest.approx(closed_form_2d(arms, theta), rel=1e-3)


def test_gradient_examples():
    actions = ActionSet(np.eye(2))
    np.testing.assert_allclose(constraint_gradient([1, 1], actions, [1, 0]), [-1, 0])
    arms = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    alpha = np.array([2.0, 1.0, 0.5])
    H = (arms * alpha[:, None]).T @ arms
    x = np.array([0.3, -0.7])
    y_perp = np.array([[0, -1], [1, 0]]) @ np.linalg.solve(H, x)
    arms2 = np.vstack([arms, y_perp])
    g = constraint_gradient(np.append(alpha, 0.0), ActionSet(arms2), x)
    assert abs(g[-1]) < 1e-24


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(0, 4), st.integers(0, 2**32 - 1))
def test_gradient_matches_finite_differences(d, extra, seed):
    rng = np.random.default_rng(seed)
    k = min(d + extra, 8)
    arms = rng.normal(size=(k, d))
    if np.linalg.matrix_rank(arms) < d:
        return
    alpha = rng.uniform(0.5, 2.0, size=k)
    x = rng.normal(size=d)
    g = constraint_gradient(alpha, ActionSet(arms), x)
    fd = fd_constraint_gradient(alpha, arms, x)
    np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-5 * np.abs(g).max())


def test_pull_plan_finite_armed():
    actions = ActionSet(np.eye(2))
    plan = pull_plan([0.0, 1.0], actions, 100, 10.0)
    assert plan.counts[1] == pytest.approx(10, rel=1e-4)
    assert math.isinf(plan.counts[0]) and plan.best_index == 0
    assert list(plan.quotas()) == [-1, 10]
    t = truncated_plan(plan, 1)
    assert t[1] == pytest.approx(10, rel=1e-4) and t[0] == 10
    t = truncated_plan(plan, 100)
    assert t[1] == plan.counts[1]
    half = truncated_plan(pull_plan([0.0, 1.0], actions, 100, 5.0), 1)
    assert half[1] == pytest.approx(5.0, rel=1e-4)
    with pytest.raises(ValueError):
        truncated_plan(plan, 0)


def test_pull_plan_scaling_identity():
    inst = counterexample(1, 0.05)
    f_n = 37.0
    g = compute_gaps(inst)
    plan = pull_plan(g.gaps, inst.actions, 1000, f_n)
    alloc = solve_allocation(inst.actions, g)
    sub = g.suboptimal
    np.testing.assert_allclose(plan.counts[sub], f_n / 2 * alloc.weights[sub], rtol=1e-9)
    T = plan.counts.copy()
    T[plan.best_index] = alloc.cap * f_n / 2
    for x in np.flatnonzero(sub):
        assert constraint_value(T, inst.actions, inst.arms[x]) <= g.gaps[x] ** 2 / f_n * (1 + 1e-5)


def test_pull_plan_errors():
    with pytest.raises(NonUniqueOptimum):
        pull_plan([0.0, 0.0, 1.0], ActionSet([[1, 0], [0, 1], [1, 1]]), 100, 10)
    with pytest.raises(ValueError):
        pull_plan([0.0, 1.0], ActionSet(np.eye(2)), 1, 10)


def test_naive_bound():
    g = compute_gaps(finite_armed([1, 0]))
    assert naive_bound(g, 2, 10) == 160
    assert naive_bound(g, 4, 10) == 8 * 160
    prev = 0
    for gmin in (0.5, 0.2, 0.1, 0.01):
        b = naive_bound(compute_gaps(finite_armed([1, 1 - gmin, 0])), 3, 10)
        assert b > prev
        prev = b


def test_plan_respects_naive_bound_random():
    rng = np.random.default_rng(2)
    for _ in range(5):
        arms = rng.normal(size=(6, 3))
        inst = Instance(ActionSet(arms), rng.normal(size=3))
        g = compute_gaps(inst)
        f_n = Thresholds(10**6, 3).f_n
        plan = pull_plan(g.gaps, inst.actions, 10**6, f_n)
        assert plan.counts[g.suboptimal].sum() <= naive_bound(g, 3, f_n)
