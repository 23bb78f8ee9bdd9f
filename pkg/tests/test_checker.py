import math

import numpy as np
import pytest

from depcheck import checker, oracle
from depcheck.checker import SolverConfig
from depcheck.errors import ConditioningError, SolverError
from depcheck.model import RewardStructure, as_mask

from support import (dtmc, enumerate_nested, enumerate_reach, enumerate_until, mission_chain,
                     random_dtmc, unit_steps)

DIRECT = SolverConfig(method="direct")
ITER = SolverConfig(method="iterative")


def _mask(m, *idx):
    return as_mask(m, list(idx))


# -- prob01 -----------------------------------------------------------------

def test_prob01_irreducible_to_absorbing_target():
    m = dtmc([[0.5, 0.5, 0], [0.3, 0.3, 0.4], [0, 0, 1]], [set(), set(), {"t"}])
    s0, s1 = checker.prob01(m, "t")
    assert s1 == {0, 1, 2} and s0 == frozenset()


def test_prob01_empty_target():
    m = dtmc([[0.5, 0.5], [0, 1]], [set(), set()])
    s0, _ = checker.prob01(m, [])
    assert s0 == {0, 1}


def test_prob01_trap_and_target():
    # 0 -> 1 -> {target 2 (0.3), trap 3 (0.7)}
    m = dtmc([[0, 1, 0, 0], [0, 0, 0.3, 0.7], [0, 0, 1, 0], [0, 0, 0, 1]],
             [set(), set(), {"t"}, set()])
    s0, s1 = checker.prob01(m, "t")
    assert s0 == {3} and s1 == {2}


# -- reachability -----------------------------------------------------------

def test_reach_branch():
    m = dtmc([[0, 0.3, 0.7], [0, 1, 0], [0, 0, 1]], [set(), {"t"}, set()])
    assert checker.reach_prob(m, "t")[0] == pytest.approx(0.3, abs=1e-15)


def test_reach_geometric_self_loop():
    m = dtmc([[0.5, 0.5], [0, 1]], [set(), {"t"}])
    assert checker.reach_prob(m, "t")[0] == 1.0


def test_reach_matches_enumeration_random_5_state():
    rng = np.random.default_rng(11)
    for _ in range(10):
        m = random_dtmc(rng, 5, absorbing=2, rewards=False)
        t = as_mask(m, "a")
        x = checker.reach_prob(m, t)
        for s in range(5):
            ref, rest = enumerate_reach(m, t, s, horizon=1000)
            assert abs(x[s] - ref) <= 1e-6 + rest


def test_until_examples():
    m = dtmc([[0.2, 0.5, 0.3, 0], [0, 1, 0, 0], [0, 0, 0.5, 0.5], [0, 0, 0, 1]],
             [{"s"}, set(), {"s"}, {"t"}])
    everything = np.ones(4, bool)
    t = as_mask(m, "t")
    assert np.allclose(checker.until_prob(m, everything, t), checker.reach_prob(m, t))
    blocked = checker.until_prob(m, as_mask(m, "!s & !t"), t)
    assert blocked[0] == 0.0
    x = checker.until_prob(m, as_mask(m, "s"), t)
    ref, rest = enumerate_until(m, as_mask(m, "s"), t, 0)
    assert abs(x[0] - ref) < 1e-9 and rest < 1e-9


def test_next():
    m = dtmc([[0, 0.3, 0.7], [0, 1, 0], [0, 0, 1]], [set(), {"t"}, set()])
    x = checker.next_prob(m, "t")
    assert x[0] == pytest.approx(0.3) and x[1] == 1.0
    rng = np.random.default_rng(3)
    r = random_dtmc(rng, 8, rewards=False)
    t = as_mask(r, "b")
    assert np.allclose(checker.next_prob(r, t), r.dense()[:, t].sum(axis=1), atol=1e-15)


# -- bounded cumulative -----------------------------------------------------

def test_bounded_zero_steps():
    m = mission_chain(10)
    assert np.all(checker.bounded_cumulative(m, "step", 0) == 0)


def test_bounded_unit_state_reward():
    m = random_dtmc(np.random.default_rng(5), 6, rewards=False)
    v = checker.bounded_cumulative(m, unit_steps(6), 5)
    assert np.allclose(v, 5.0, atol=1e-12)


def test_bounded_mission_chain_against_walks():
    l = 20.0
    m = mission_chain(l)
    exact = checker.bounded_cumulative(m, "step", 10)[0]
    assert exact == pytest.approx(sum((1 - 1 / l) ** i for i in range(10)), rel=1e-13)
    est = oracle.mc_estimate(m, 'R{"step"}=? [ C<=10 ]', n_traces=1_000_000, seed=2)
    assert est.agrees(exact)


# -- reachability rewards ---------------------------------------------------

def test_mission_chain_mean_is_l_mis():
    m = mission_chain(200)
    for cfg in (DIRECT, ITER):
        assert checker.reach_reward(m, "step", "terminated", cfg)[0] == pytest.approx(200, abs=1e-6)
    assert checker.reach_reward(m, "step", "terminated", DIRECT)[0] == pytest.approx(200, abs=1e-9)


def test_reward_infinite_when_target_can_be_missed():
    m = dtmc([[0, 0.5, 0.5], [0, 1, 0], [0, 0, 1]], [set(), {"t"}, set()],
             rewards={"step": unit_steps(3)})
    assert math.isinf(checker.reach_reward(m, "step", "t")[0])


def test_reward_zero_at_target():
    m = dtmc([[0, 1], [0, 1]], [{"t"}, set()], rewards={"step": unit_steps(2)})
    assert checker.reach_reward(m, "step", "t")[0] == 0.0


def test_transition_rewards_counted_per_taken_edge():
    rt = RewardStructure.from_maps("r", 3, {0: 1.0}, {(0, 1): 4.0, (0, 2): 10.0})
    m = dtmc([[0, 0.25, 0.75], [0, 1, 0], [0, 0, 1]], [set(), {"t"}, {"t"}], rewards={"r": rt})
    assert checker.reach_reward(m, "r", "t")[0] == pytest.approx(1 + 0.25 * 4 + 0.75 * 10)


# -- nested probability -----------------------------------------------------

def test_nested_a_equals_b():
    rng = np.random.default_rng(8)
    m = random_dtmc(rng, 7, rewards=False)
    b = as_mask(m, "b")
    assert np.allclose(checker.nested_reach_prob(m, b, b), checker.reach_prob(m, b))


def test_nested_b_unreachable():
    m = dtmc([[0.5, 0.5], [0, 1]], [{"a"}, set()])
    assert np.all(checker.nested_reach_prob(m, "a", []) == 0)


def test_nested_hand_model_matches_enumeration():
    # b may come before a; only a b at/after the first a counts
    m = dtmc([[0, 0.4, 0.3, 0.3, 0],
              [0, 0, 0.5, 0, 0.5],
              [0, 0, 0, 0.6, 0.4],
              [0, 0, 0, 1, 0],
              [0, 0, 0, 0, 1]],
             [set(), {"b"}, {"a"}, {"b"}, set()])
    a, b = as_mask(m, "a"), as_mask(m, "b")
    x = checker.nested_reach_prob(m, a, b)
    for s in range(5):
        ref, rest = enumerate_nested(m, a, b, s)
        assert abs(x[s] - ref) < 1e-12 and rest < 1e-9
    assert x[0] == pytest.approx((0.4 * 0.5 + 0.3) * 0.6)


# -- conditional rewards ----------------------------------------------------

def test_conditional_equals_strict_when_almost_sure():
    m = mission_chain(37)
    a = checker.reach_reward(m, "step", "terminated")
    b = checker.conditional_reach_reward(m, "step", "terminated")
    assert np.array_equal(a, b)


def test_conditional_single_surviving_path():
    m = dtmc([[0, 0.5, 0.5], [0, 1, 0], [0, 0, 1]], [set(), {"goal"}, set()],
             rewards={"step": unit_steps(3)})
    assert checker.conditional_reach_reward(m, "step", "goal")[0] == 1.0
    assert math.isnan(checker.conditional_reach_reward(m, "step", "goal")[2])
    with pytest.raises(ConditioningError):
        checker.value_at(checker.conditional_reach_reward(m, "step", "goal"), 2)


def test_conditional_with_crash_branch_against_mc():
    # 0: start, 1: wobble, 2: risky, 3: goal, 4: crash
    m = dtmc([[0.3, 0.4, 0.3, 0, 0],
              [0.2, 0.2, 0.2, 0.4, 0],
              [0, 0.3, 0.2, 0.2, 0.3],
              [0, 0, 0, 1, 0],
              [0, 0, 0, 0, 1]],
             [set(), set(), set(), {"goal"}, {"crash"}],
             rewards={"step": unit_steps(5)})
    exact = checker.conditional_reach_reward(m, "step", "goal")[0]
    est = oracle.mc_estimate(m, 'R{"step"}=? [ F goal ]', n_traces=1_000_000, seed=4,
                             semantics="conditional")
    assert est.agrees(exact)


# -- nested rewards ---------------------------------------------------------

def test_nested_reward_deterministic_path():
    # s0 -> A -> B: fulfilled on entering B after two unit steps
    m = dtmc([[0, 1, 0], [0, 0, 1], [0, 0, 1]], [set(), {"A"}, {"B"}],
             rewards={"step": unit_steps(3)})
    assert checker.nested_reach_reward(m, "step", "A", "B")[0] == 2.0


def test_nested_reward_initial_in_a():
    # A at the start, B certain: the reward is the time to B
    m = dtmc([[0.5, 0.5], [0, 1]], [{"A"}, {"B"}], rewards={"step": unit_steps(2)})
    assert checker.nested_reach_reward(m, "step", "A", "B")[0] == pytest.approx(2.0)
    both = dtmc([[1.0]], [{"A", "B"}], rewards={"step": unit_steps(1)})
    assert checker.nested_reach_reward(both, "step", "A", "B")[0] == 0.0


def test_nested_reward_hand_model_against_mc():
    m = dtmc([[0.2, 0.5, 0.2, 0, 0, 0.1],
              [0.1, 0.2, 0.3, 0.3, 0.1, 0],
              [0, 0.2, 0.2, 0.2, 0.4, 0],
              [0.3, 0, 0.3, 0.2, 0, 0.2],
              [0, 0, 0, 0, 1, 0],
              [0, 0, 0, 0, 0, 1]],
             [set(), {"B"}, {"A"}, {"B"}, set(), {"A"}],
             rewards={"step": unit_steps(6)})
    exact = checker.nested_reach_reward(m, "step", "A", "B")[0]
    est = oracle.mc_estimate(m, 'R{"step"}=? [ F (A & F B) ]', n_traces=1_000_000, seed=5,
                             semantics="conditional")
    assert est.agrees(exact)
    strict = checker.nested_reach_reward(m, "step", "A", "B", conditional=False)[0]
    assert math.isinf(strict)


# -- solvers ----------------------------------------------------------------

def test_direct_and_iterative_agree_200_states():
    rng = np.random.default_rng(21)
    for _ in range(3):
        m = random_dtmc(rng, 200, absorbing=3, max_out=4)
        t = as_mask(m, "a")
        d = checker.reach_prob(m, t, DIRECT)
        i = checker.reach_prob(m, t, ITER)
        assert np.max(np.abs(d - i)) <= 1e-8
        rd = checker.conditional_reach_reward(m, "r", t, DIRECT)
        ri = checker.conditional_reach_reward(m, "r", t, ITER)
        ok = ~np.isnan(rd)
        assert np.allclose(rd[ok], ri[ok], rtol=1e-8, atol=1e-8)


def test_non_convergence_carries_residual():
    # symmetric walk on 0..50 absorbed at both ends: slow for Gauss-Seidel
    n = 51
    rows = np.zeros((n, n))
    rows[0, 0] = rows[n - 1, n - 1] = 1.0
    for i in range(1, n - 1):
        rows[i, i - 1] = rows[i, i + 1] = 0.5
    m = dtmc(rows, [set()] * (n - 1) + [{"t"}])
    exact = checker.reach_prob(m, "t", ITER)
    assert np.allclose(exact, np.arange(n) / (n - 1), atol=1e-8)
    with pytest.raises(SolverError) as exc:
        checker.reach_prob(m, "t", SolverConfig("iterative", max_iterations=2))
    assert exc.value.residual > 0
