import math

import numpy as np
import pytest

from linbandit.design import pull_plan
from linbandit.env import LinearBanditEnv, replication_seed
from linbandit.errors import ConfigError
from linbandit.instances import ActionSet, Instance, compute_gaps, counterexample, example2, finite_armed
from linbandit.policies import (
    RECOVERY,
    SUCCESS,
    WARMUP,
    EstimatorState,
    OptimalAlgState,
    PolicyConfig,
    checkpoint_grid,
    estimator_update,
    optimal_alg_choose,
    optimism_choose,
    make_policy,
    policy_run,
    thompson_choose,
    thompson_sample,
    ucb_choose,
)

PHASE_ORDER = {WARMUP: 0, SUCCESS: 1, RECOVERY: 2}


def _state(arms, pulls):
    st = EstimatorState(np.asarray(arms, dtype=float))
    for arm, y in pulls:
        estimator_update(st, arm, y)
    return st


def test_estimator_noiseless_gaps():
    inst = counterexample(1, 0.05)
    st = _state(inst.arms, [(x, float(inst.arms[x] @ inst.theta)) for x in (0, 1)])
    np.testing.assert_allclose(st.gaps_hat, compute_gaps(inst).gaps, atol=1e-12)


def test_estimator_unavailable_before_full_rank():
    st = _state(np.eye(2), [(0, 1.0)])
    assert not st.ready and np.all(np.isnan(st.mu_hat))


def test_estimator_sample_mean():
    st = _state(np.eye(2), [(0, 1.0), (0, 0.0)])
    assert st.sample_means[0] == 0.5
    estimator_update(st, 1, 0.3)
    assert st.mu_hat[0] == pytest.approx(0.5)
    assert st.t == 3 and list(st.pulls) == [2, 1]


def test_ucb_initial_cycle_and_less_pulled_arm():
    st = EstimatorState(np.eye(3))
    for t in range(1, 4):
        a = ucb_choose(st, t)
        assert a == t - 1
        estimator_update(st, a, 0.0)
    estimator_update(st, 0, 0.0)
    estimator_update(st, 2, 0.0)
    assert ucb_choose(st, st.t + 1) == 1


def test_ucb_never_picks_dominated_arm():
    rng = np.random.default_rng(0)
    for _ in range(200):
        st = EstimatorState(np.eye(4))
        for _ in range(rng.integers(4, 30)):
            estimator_update(st, int(rng.integers(0, 4)), float(rng.normal()))
        if st.pulls.min() == 0:
            continue
        t = st.t + 1
        a = ucb_choose(st, t)
        means = st.sample_means
        bonus = np.sqrt(2 * math.log(t) / st.pulls)
        assert not np.any((means > means[a]) & (bonus > bonus[a]))


def test_optimism_simple_choice_and_greedy_limit():
    st = _state(np.eye(2), [(0, 1.0), (1, 0.0)])
    assert optimism_choose(st, PolicyConfig("oful"), 100) == 0
    rng = np.random.default_rng(1)
    arms = rng.normal(size=(6, 3))
    st = _state(arms, [(int(i), float(rng.normal())) for i in rng.integers(0, 6, 20)])
    assert optimism_choose(st, PolicyConfig("oful", alpha_conf=0.0), 100) == int(np.argmax(st.mu_hat))


def test_optimism_bonus_scaling():
    st = _state(np.eye(2), [(0, 0.2), (1, 0.5)])
    for c in (0.5, 2.0, 3.0):
        assert optimism_choose(st, PolicyConfig("oful", alpha_conf=c * c), 100) == 1
    # bonus scales with the square root of alpha_conf
    st2 = _state(np.eye(2), [(0, 0.2), (1, 0.5), (0, 0.2)])
    b = lambda a: math.sqrt(a * math.log(100)) * np.sqrt(st2.q)  # noqa: E731
    np.testing.assert_allclose(b(4.0), 2 * b(1.0))


def test_optimism_and_thompson_agree_at_zero_scale():
    rng = np.random.default_rng(5)
    for _ in range(30):
        arms = rng.normal(size=(5, 3))
        st = _state(arms, [(int(i), float(rng.normal())) for i in rng.integers(0, 5, 15)])
        if not st.ready:
            continue
        a = optimism_choose(st, PolicyConfig("oful", alpha_conf=0.0), 50)
        b = thompson_choose(st, PolicyConfig("lints", alpha_conf=0.0), np.random.default_rng(0))
        assert a == b


def test_thompson_factor_and_distribution():
    rng = np.random.default_rng(2)
    arms = rng.normal(size=(4, 3))
    st = _state(arms, [(i % 4, float(rng.normal())) for i in range(12)])
    L = st.cholesky()
    np.testing.assert_allclose(L @ L.T, st.G, atol=1e-10)
    cov = np.linalg.inv(L).T @ np.linalg.inv(L)
    np.testing.assert_allclose(cov, cov.T, atol=1e-12)
    assert np.linalg.eigvalsh(cov).min() > 0
    np.testing.assert_allclose(cov, np.linalg.inv(st.G), rtol=1e-8)

    st = _state(np.eye(2), [(0, 0.7), (1, -0.2)])
    draws = np.array([thompson_sample(st, 1.0, z) for z in rng.standard_normal((10**4, 2))])
    assert np.abs(draws.mean(axis=0) - st.theta_hat).max() <= 0.05
    np.testing.assert_allclose(np.cov(draws.T), np.eye(2), atol=0.05)


def test_warmup_length_small_n():
    oa = OptimalAlgState(np.eye(2), 20)
    assert oa.warmup_length == 4


def test_optimal_first_success_round_passes_anomaly_test():
    inst = finite_armed([1.0, 0.0])
    env = LinearBanditEnv(inst, 1000, 3)
    st = EstimatorState(inst.arms)
    oa = OptimalAlgState(inst.arms, 1000)
    while oa.phase == WARMUP:
        a = optimal_alg_choose(st, oa, 1000)
        if oa.phase == WARMUP:
            oa.warm_rounds += 1
            estimator_update(st, a, env.pull(a).reward)
    assert oa.phase == SUCCESS and not oa.anomaly(st)
    assert oa.eps_n > 0


def test_optimal_noiseless_quota_trace():
    n = 10**4
    inst = finite_armed([1.0, 0.0])
    env = LinearBanditEnv(inst, n, 0, noiseless=True)
    tr = policy_run(PolicyConfig("optimal"), env, full_trace=True)
    assert [p for p, _ in tr.phase_log] == [WARMUP, SUCCESS]
    oa = OptimalAlgState(inst.arms, n)
    plan = pull_plan(compute_gaps(inst).gaps, ActionSet(inst.arms), n, oa.thresholds.f_n)
    # quotas count pulls since round 1, so warm-up pulls are part of the quota
    assert tr.pull_counts[1] == max(math.ceil(plan.counts[1] * (1 - 1e-6)), oa.warmup_count_per_arm)
    assert tr.phase_log[1][1] == oa.warmup_length + 1


def test_optimal_phases_monotone():
    inst = counterexample(1, 0.01)
    for seed in range(20):
        tr = policy_run(PolicyConfig("optimal"), LinearBanditEnv(inst, 400, seed), stepwise=True)
        phases = [PHASE_ORDER[p] for p, _ in tr.phase_log]
        rounds = [t for _, t in tr.phase_log]
        assert phases == sorted(set(phases)) and phases[0] == 0
        assert rounds == sorted(rounds)


def test_anomaly_triggers_fresh_ucb_recovery():
    # warm-up rewards follow theta = (1, 0); afterwards the world flips to
    # theta = (-20, 20), which drags the estimates far from the snapshot
    arms = np.eye(2)
    n = 2000
    pol = make_policy(PolicyConfig("optimal"), arms, n)
    flip = np.array([-20.0, 20.0])
    for t in range(1, n + 1):
        a = pol.choose()
        theta = np.array([1.0, 0.0]) if pol.oa.phase == WARMUP else flip
        if pol.oa.phase == RECOVERY:
            break
        pol.update(a, float(arms[a] @ theta))
    phases = [p for p, _ in pol.oa.phase_log]
    assert phases == [WARMUP, SUCCESS, RECOVERY]
    # the first recovery choice already ran with discarded data: UCB starts from arm 0
    assert a == 0 and pol.oa.ucb_counts.sum() == 0
    pol.update(a, 0.0)
    assert pol.choose() == 1


def test_optimal_needs_n_at_least_3():
    with pytest.raises(ConfigError):
        OptimalAlgState(np.eye(2), 2)


@pytest.mark.parametrize("name", ["ucb", "oful", "lints", "optimal"])
@pytest.mark.parametrize("inst", [counterexample(1, 0.01), example2(2, 0.05), finite_armed([0.3, 0.9, 0.5])])
def test_fast_path_matches_stepwise(name, inst):
    cfg = PolicyConfig(name, c_univ=0.3)
    a = policy_run(cfg, LinearBanditEnv(inst, 1500, 11), full_trace=True, stepwise=True)
    b = policy_run(cfg, LinearBanditEnv(inst, 1500, 11), full_trace=True, chunk=97)
    np.testing.assert_array_equal(a.arms, b.arms)
    np.testing.assert_allclose(a.cum_regret, b.cum_regret, rtol=1e-12)
    np.testing.assert_array_equal(a.pull_counts, b.pull_counts)
    assert a.phase_log == b.phase_log


@pytest.mark.parametrize("name", ["ucb", "oful", "lints", "optimal"])
def test_trace_basics(name):
    inst = counterexample(1, 0.02)
    n = 777
    tr = policy_run(PolicyConfig(name), LinearBanditEnv(inst, n, 5), full_trace=True)
    assert len(tr.arms) == n and list(tr.rounds) == list(range(1, n + 1))
    assert np.all(np.diff(tr.cum_regret) >= 0)
    assert tr.final_regret == pytest.approx(tr.accounted_regret(compute_gaps(inst).gaps), abs=1e-9)
    again = policy_run(PolicyConfig(name), LinearBanditEnv(inst, n, 5))
    assert again.final_regret == tr.final_regret
    np.testing.assert_array_equal(again.rounds, checkpoint_grid(n))
    np.testing.assert_array_equal(again.cum_regret, tr.cum_regret[checkpoint_grid(n) - 1])
    np.testing.assert_allclose(tr.gram, (inst.arms.T * tr.pull_counts) @ inst.arms)


def test_checkpoint_grid():
    assert list(checkpoint_grid(1)) == [1]
    assert list(checkpoint_grid(8)) == [1, 2, 4, 8]
    assert list(checkpoint_grid(10)) == [1, 2, 4, 8, 10]


def test_optimism_e2_pulls_on_counterexample():
    inst = counterexample(1, 0.01)
    n = 10**6
    pulls = [policy_run(PolicyConfig("oful"), LinearBanditEnv(inst, n, replication_seed(0, r))).pull_counts[1] for r in range(50)]
    assert np.mean(pulls) <= 2 + 4 * math.log(n)


def test_policy_config_validation():
    with pytest.raises(ConfigError):
        PolicyConfig("greedy")
    with pytest.raises(ConfigError):
        PolicyConfig.from_dict({"name": "oful", "beta": 1})
    with pytest.raises(ConfigError):
        PolicyConfig("oful", alpha_conf=-1)
    assert PolicyConfig.from_dict("ucb").name == "ucb"
    assert PolicyConfig.from_dict({"name": "oful", "label": "o2"}).display == "o2"


def test_policies_never_see_theta():
    # a policy run on two instances with the same arms but different theta
    # draws the same first arms until rewards differ
    arms = np.eye(2)
    a = policy_run(PolicyConfig("oful"), LinearBanditEnv(Instance(ActionSet(arms), [1, 0]), 2, 0), full_trace=True)
    b = policy_run(PolicyConfig("oful"), LinearBanditEnv(Instance(ActionSet(arms), [0, 1]), 2, 0), full_trace=True)
    np.testing.assert_array_equal(a.arms, b.arms)
