import warnings

import numpy as np
import pytest

from depcheck.errors import DataError
from depcheck.estimation import (Episode, EstimationWarning, MissionStage, RiskMap,
                                 build_from_episodes, build_product, count_transitions,
                                 episodes_to_jsonl, estimate_mission_length, load_riskmap,
                                 map_clearance, mle, read_episodes)
from depcheck.model import satisfying_states, validate

from support import PLANTED, planted_episodes

DEFAULT = RiskMap()


@pytest.mark.parametrize("c, level", [(3.5, 0), (2.5, 1), (2.0, 1), (3.0, 0), (1.0, 2),
                                      (0.99, 3), (0.0, 3)])
def test_map_clearance(c, level):
    assert map_clearance(c, DEFAULT) == level


def test_map_clearance_vectorised():
    assert list(map_clearance([3.5, 2.5, 0.4], DEFAULT)) == [0, 1, 3]


def test_count_goal_episode():
    n = count_transitions([Episode([3.5, 2.5, 3.5], "goal")], DEFAULT)
    expect = np.zeros((5, 5), int)
    expect[0, 1] = expect[1, 0] = 1
    assert np.array_equal(n, expect)


def test_count_crash_episode():
    n = count_transitions([Episode([3.5, 0.4], "crash")], DEFAULT)
    assert n[0, 3] == 1 and n[3, 4] == 1 and n.sum() == 2


def test_count_rejects_empty():
    with pytest.raises(DataError):
        count_transitions([], DEFAULT)
    with pytest.raises(DataError):
        Episode([], "goal")
    with pytest.raises(DataError):
        Episode([1.0], "exploded")


def test_mle_row():
    c = np.zeros((5, 5))
    c[0, :2] = [8, 2]
    c[1:4, 0] = 1
    p = mle(c)
    assert list(p[0]) == [0.8, 0.2, 0, 0, 0]
    assert p[4, 4] == 1.0


def test_mle_zero_row_warns():
    c = np.zeros((5, 5))
    c[0, 0] = c[1, 0] = c[2, 0] = 3
    with pytest.warns(EstimationWarning, match="level 3"):
        p = mle(c)
    assert list(p[3]) == [0, 0, 0, 1, 0]


def test_mle_ignores_crash_row_with_warning():
    c = np.ones((5, 5))
    with pytest.warns(EstimationWarning, match="crash"):
        p = mle(c)
    assert list(p[4]) == [0, 0, 0, 0, 1]


def test_mission_length_examples():
    goal = lambda k: Episode([3.5] * k, "goal")  # noqa: E731
    # k logged steps make k - 1 transitions
    assert estimate_mission_length([goal(101), goal(301)]).l_mis == 200
    assert estimate_mission_length([goal(50), Episode([3.5, 0.0], "crash")]).l_mis == 49
    with pytest.raises(DataError):
        estimate_mission_length([Episode([3.5, 0.0], "crash")])
    timeout = Episode([3.5] * 11, "timeout")
    assert estimate_mission_length([goal(21), timeout]).l_mis == 15
    assert estimate_mission_length([goal(21), timeout], include_timeouts=False).l_mis == 20


def test_mission_stage_bounds():
    with pytest.raises(DataError):
        MissionStage(0.5)


def test_product_structure():
    p1 = np.eye(5)
    p1[0] = [0.9, 0.1, 0, 0, 0]
    m = build_product(p1, MissionStage(200.0), DEFAULT)
    assert m.n_states == 10
    assert m.dense()[0, 5] == pytest.approx(0.0045, abs=1e-15)
    assert validate(m) == []
    assert m.initial == m.index("s_N,k0")
    for i, lab in enumerate(m.labels):
        assert len([x for x in lab if x in ("progressing", "terminated")]) == 1
        assert len([x for x in lab if x not in ("progressing", "terminated")]) == 1
    dev = m.reward("deviation")
    assert list(dev.state_rewards[:5]) == [0, 1, 2, 3, 0]
    assert dev.transition_rewards.nnz == 0
    step = m.reward("step")
    assert not step.state_rewards.any()
    src = step.transition_rewards.tocoo().row
    assert set(src) <= {0, 1, 2, 3, 4} and step.transition_rewards.nnz == m.matrix[:5].nnz
    for s in range(5, 10):
        assert m.dense()[s, s] == 1.0
    assert satisfying_states(m, "crit_situ") == {m.index("s_B3,k0")}
    assert satisfying_states(m, "ncrit_situ") == {m.index("s_N,k0")}


def test_product_rejects_bad_matrix():
    with pytest.raises(DataError):
        build_product(np.full((5, 5), 0.3), MissionStage(2.0), DEFAULT)
    with pytest.raises(DataError):
        build_product(np.eye(4), MissionStage(2.0), DEFAULT)


def test_riskmap_validation(tmp_path):
    with pytest.raises(DataError):
        RiskMap((1.0, 2.0), (1.0, 2.0))
    with pytest.raises(DataError):
        RiskMap((3.0, 2.0), (2.0, 1.0))
    with pytest.raises(DataError):
        RiskMap((4.0,), (1.0,))
    cfg = tmp_path / "r.toml"
    cfg.write_text("[riskmap]\nthresholds = [2.0, 1.0]\ndeviations = [1.0, 5.0]\n")
    rm = load_riskmap(str(cfg))
    assert rm.m == 2 and rm.deviations == (1.0, 5.0)
    assert load_riskmap("default") == DEFAULT


def test_episode_jsonl_round_trip(tmp_path):
    eps = [Episode([3.5, 2.0, 0.0], "crash"), Episode([3.2, 3.3], "goal")]
    path = tmp_path / "e.jsonl"
    path.write_text(episodes_to_jsonl(eps))
    assert read_episodes(path) == eps
    path.write_text('{"steps": [], "outcome": "goal"}\n')
    with pytest.raises(DataError, match="line 1"):
        read_episodes(path)


def test_count_conservation_planted():
    rng = np.random.default_rng(0)
    eps = planted_episodes(rng, PLANTED, 300)
    n = count_transitions(eps, DEFAULT)
    assert n.sum() == sum(e.length - 1 for e in eps) + sum(e.outcome == "crash" for e in eps)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        p = mle(n)
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-12)


def test_mle_recovery_10k_episodes():
    rng = np.random.default_rng(1)
    eps = planted_episodes(rng, PLANTED, 10_000)
    p = mle(count_transitions(eps, DEFAULT))
    assert np.max(np.abs(p - PLANTED)) <= 0.02


def test_mle_unbiased_at_fixed_row_totals():
    # multinomial rows with a fixed number of draws: 1000 resamples, each
    # entry's mean within 3 SE of the truth
    rng = np.random.default_rng(2)
    n = 40
    est = []
    for _ in range(1000):
        counts = np.vstack([rng.multinomial(n, row) for row in PLANTED[:4]] + [np.zeros(5)])
        est.append(mle(counts))
    est = np.array(est)
    mean = est.mean(axis=0)
    se = est.std(axis=0, ddof=1) / np.sqrt(len(est))
    assert np.all(np.abs(mean - PLANTED) <= 3 * se + 1e-12)


def test_trajectory_estimate_bias_shrinks():
    # with random per-row totals the ratio estimate is only asymptotically unbiased
    def bias(n_eps, reps, seed):
        rng = np.random.default_rng(seed)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", EstimationWarning)
            est = [mle(count_transitions(planted_episodes(rng, PLANTED, n_eps, p_end=0.02),
                                         DEFAULT)) for _ in range(reps)]
        return np.abs(np.mean(est, axis=0) - PLANTED)[:3].max()
    assert bias(40, 200, 3) < 0.01


def test_build_from_episodes_meta():
    eps = [Episode([3.5, 3.5, 2.5, 3.5], "goal"), Episode([3.5, 0.5, 0.0], "crash")]
    with pytest.warns(EstimationWarning):
        m = build_from_episodes(eps)
    assert m.meta["samples"] == 2 and m.meta["crashes"] == 1
    assert m.meta["l_mis"] == 3.0 and m.meta["success_rate"] == 0.5
    with pytest.raises(DataError):
        build_from_episodes([])
