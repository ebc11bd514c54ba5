import io
import json

import numpy as np
import pytest

from collabmem.env import EnvConfig, generate_episode
from collabmem.errors import ConfigError, StepError
from collabmem.policies import PolicyParams, init_policies, param_dim
from collabmem.rewards import RewardConfig, answer_reward, extraction_reward, profile_reward, retrieval_reward
from collabmem.trajectory import TrajectoryGroup, dump_trajectories, run_trajectory, sample_group

CFG = EnvConfig()
RCFG = RewardConfig()


def saturated_extraction(cfg, bias=50.0):
    theta = np.zeros(param_dim("extraction", cfg))
    theta[-1] = bias
    return PolicyParams("extraction", theta)


def test_state_chain_and_reward_recomputation():
    pol = init_policies(CFG, 1)
    for seed in range(10):
        ep = generate_episode(seed, CFG)
        t = run_trajectory(pol, ep, 4, RCFG, np.random.default_rng(seed))
        assert t.s0 is ep.history
        assert t.s1 == t.actions[0].action
        assert t.s2 == ((t.actions[0].action, t.actions[1].action), ep.query)
        assert t.s3 == t.actions[2].action
        assert set(t.s3.retrieved_ids) <= t.s1.included_ids
        assert len(t.s3.retrieved_ids) == min(4, len(t.s1.included_ids))
        assert t.rewards.r_cons_f == extraction_reward(t.s1.included_ids, ep.query.evidence_ids, 0.8)
        assert t.rewards.r_cons_c == profile_reward(t.actions[1].action, ep)
        assert t.rewards.r_ret == retrieval_reward(t.s3.retrieved_ids, ep.query.evidence_ids, 0.2)
        assert t.rewards.r_ans == answer_reward(t.s3.answer, ep.query.correct_option)


def test_saturated_extraction_keeps_everything():
    pol = dict(init_policies(CFG), extraction=saturated_extraction(CFG))
    ep = generate_episode(3, CFG)
    t = run_trajectory(pol, ep, 4, RCFG, np.random.default_rng(0))
    assert t.s1.included_ids == set(range(40))
    assert t.rewards.r_cons_f == pytest.approx(0.8 + 0.2 * 4 / 40, abs=1e-15)


def test_determinism_and_group_shapes():
    pol = init_policies(CFG, 2)
    ep = generate_episode(4, CFG)
    a = run_trajectory(pol, ep, 4, RCFG, np.random.default_rng(9))
    b = run_trajectory(pol, ep, 4, RCFG, np.random.default_rng(9))
    assert a == b
    g = sample_group(pol, ep, 8, 4, RCFG, (1, 2, 3))
    assert len(g) == 8 and g.global_rewards.shape == (8,)
    assert all(v.shape == (8,) for v in g.local_rewards.values())
    assert set(np.unique(g.global_rewards)) <= {0.0, 1.0}
    assert np.array_equal(g.local_matrix()[0], [t.rewards.r_cons_f for t in g.trajectories])


def test_group_is_order_independent():
    """Trajectory i depends only on (seed, i): sampling them one by one in reverse gives the same group."""
    from collabmem.trajectory import trajectory_rng

    pol = init_policies(CFG, 2)
    ep = generate_episode(4, CFG)
    g = sample_group(pol, ep, 6, 4, RCFG, (7, 7))
    rev = [run_trajectory(pol, ep, 4, RCFG, trajectory_rng((7, 7), i)) for i in reversed(range(6))]
    assert TrajectoryGroup.from_trajectories(rev[::-1]).trajectories == g.trajectories


def test_deterministic_policies_give_identical_trajectories():
    from collabmem.policies import RetrievalState, answer_probs

    theta = {a: np.zeros(param_dim(a, CFG)) for a in ("extraction", "profile", "retrieval")}
    theta["extraction"][-1] = 1e4
    theta["profile"][CFG.d + 1] = 1e4  # bias of the label-0 row
    theta["retrieval"][CFG.d] = 1e6  # salience gives a strict ranking
    theta["retrieval"][-3:] = [1e4, 1e3, 1e2]
    pol = {a: PolicyParams(a, t) for a, t in theta.items()}
    checked = 0
    for seed in range(20):
        ep = generate_episode(seed, CFG)
        g = sample_group(pol, ep, 8, 4, RCFG, 5)
        t0 = g.trajectories[0]
        st = RetrievalState(ep.history, t0.s1, t0.actions[1].action, ep.query, 4)
        if answer_probs(pol["retrieval"], st, t0.s3.retrieved_ids).max() < 1 - 1e-12:
            continue  # tied option scores leave the answer genuinely random
        checked += 1
        assert all(t.actions == t0.actions for t in g.trajectories)
        assert np.all(g.local_matrix() == g.local_matrix()[:, :1])
        assert np.all(g.global_rewards == g.global_rewards[0])
    assert checked >= 5


def test_errors():
    pol = init_policies(CFG, 0)
    ep = generate_episode(0, CFG)
    with pytest.raises(ConfigError):
        sample_group(pol, ep, 1, 4, RCFG, 0)
    with pytest.raises(ConfigError):
        run_trajectory({"extraction": pol["extraction"]}, ep, 4, RCFG, np.random.default_rng(0))
    bad = dict(pol, retrieval=PolicyParams("retrieval", np.zeros(3)))
    with pytest.raises(StepError) as info:
        run_trajectory(bad, ep, 4, RCFG, np.random.default_rng(0))
    assert info.value.step == 2


def test_dump_is_one_json_object_per_trajectory():
    g = sample_group(init_policies(CFG, 0), generate_episode(0, CFG), 3, 4, RCFG, 0)
    buf = io.StringIO()
    dump_trajectories(g.trajectories, buf)
    rows = [json.loads(line) for line in buf.getvalue().splitlines()]
    assert len(rows) == 3
    assert set(rows[0]) == {"episode_id", "k", "s1", "s2", "s3", "logprobs", "rewards"}
