import numpy as np
import pytest

from htforge.circuit import splice_trojan
from htforge.envs.insertion import (
    ACTIVATION_REWARDS,
    INVALID_REWARD,
    NEXT_LEVEL,
    NO_ACTION,
    PREV_LEVEL,
    SAME_LEVEL_DOWN,
    SAME_LEVEL_UP,
    InsertionEnv,
    TrojanRecord,
    harvest_trojans,
    reward_for_rare_count,
)
from htforge.errors import EmptyHarvest, EnvContractViolation, InfeasibleReset
from htforge.logic_sim import compare_outputs
from htforge.rl.nets import init_params
from htforge.testability import RareNetSet


def _rare(ids, vals):
    return RareNetSet(tuple(ids), tuple(vals), tuple(0.0 for _ in ids), "static")


def test_reward_table():
    assert reward_for_rare_count(0) == INVALID_REWARD
    assert reward_for_rare_count(-3) == INVALID_REWARD
    assert reward_for_rare_count(1) == 8.0
    assert reward_for_rare_count(2) == 16.0
    assert reward_for_rare_count(3) == 100.0
    assert reward_for_rare_count(4) == 1000.0
    assert reward_for_rare_count(5) == 10000.0
    assert reward_for_rare_count(9) == max(ACTIVATION_REWARDS.values())


def test_constructor_validation(tiny):
    rare = _rare([0], [0])
    with pytest.raises(EnvContractViolation):
        InsertionEnv(tiny, rare, payload_mode="weird")
    with pytest.raises(EnvContractViolation):
        InsertionEnv(tiny, rare, trigger_count=0)
    with pytest.raises(EnvContractViolation):
        InsertionEnv(tiny, rare, episode_length=0)


def test_infeasible_when_too_many_triggers(c17):
    with pytest.raises(InfeasibleReset):
        InsertionEnv(c17, _rare([0], [0]), trigger_count=20)


def test_spaces_and_observation(tiny):
    env = InsertionEnv(tiny, _rare([0], [0]), trigger_count=2,
                       episode_length=5, seed=1)
    assert env.action_space.heads == (5, 5)
    assert env.observation_size == 4
    obs = env.reset()
    assert obs.dtype == np.float64 and obs.shape == (4,)
    levels = tiny.levels
    np.testing.assert_array_equal(
        obs, [levels[env.triggers[0]], levels[env.triggers[1]],
              levels[env.target], levels[env.target] + 1])
    assert all(levels[t] < levels[env.target] for t in env.triggers)


def test_jump_moves_are_deterministic_on_chain(chain):
    env = InsertionEnv(chain, _rare([0], [0]), trigger_count=1,
                       episode_length=10, seed=0)
    env.reset()
    env.target = chain.id_of("n3")  # level 3
    env.triggers = [chain.id_of("a")]  # level 0

    obs, r, done, info = env.step([PREV_LEVEL])  # below level 0: no-op
    assert env.triggers == [chain.id_of("a")] and not done

    env.step([NEXT_LEVEL])
    assert env.triggers == [chain.id_of("n1")]
    env.step([NEXT_LEVEL])
    assert env.triggers == [chain.id_of("n2")]
    # the only net at level 3 is the target itself: jump has nowhere to go
    obs, r, done, info = env.step([NEXT_LEVEL])
    assert env.triggers == [chain.id_of("n2")]
    assert not info.get("invalid", False)


def test_slide_saturates_and_respects_occupancy(tiny, chain):
    env = InsertionEnv(tiny, _rare([0], [0]), trigger_count=1,
                       episode_length=10, seed=0)
    env.reset()
    env.target = tiny.id_of("z")
    env.triggers = [tiny.id_of("p")]  # level 1 peers: [p, q]
    env.step([SAME_LEVEL_DOWN])  # p is first at its level
    assert env.triggers == [tiny.id_of("p")]
    env.step([SAME_LEVEL_UP])
    assert env.triggers == [tiny.id_of("q")]
    env.step([SAME_LEVEL_UP])  # q is last at its level
    assert env.triggers == [tiny.id_of("q")]

    env2 = InsertionEnv(chain, _rare([0], [0]), trigger_count=2,
                        episode_length=10, seed=0)
    env2.reset()
    env2.target = chain.id_of("n2")
    env2.triggers = [chain.id_of("a"), chain.id_of("b")]
    env2.step([SAME_LEVEL_UP, NO_ACTION])  # destination held by trigger 1
    assert env2.triggers == [chain.id_of("a"), chain.id_of("b")]


def test_jump_skips_occupied_nets(chain):
    env = InsertionEnv(chain, _rare([0], [0]), trigger_count=2,
                       episode_length=10, seed=0)
    env.reset()
    env.target = chain.id_of("n2")
    env.triggers = [chain.id_of("a"), chain.id_of("b")]
    # trigger 0 claims the only level-1 net; trigger 1 then has no room
    obs, reward, done, info = env.step([NEXT_LEVEL, NEXT_LEVEL])
    assert env.triggers == [chain.id_of("n1"), chain.id_of("b")]
    # that placement is masked by the AND with b=0: provably silent
    assert info["activated"] is False and reward == INVALID_REWARD
    assert env.population_size == 0
    # identical placement next step: served from the activation cache
    env.step([NO_ACTION, NO_ACTION])
    assert len(env._activation_cache) == 1


def test_level_collision_ends_episode(tiny):
    env = InsertionEnv(tiny, _rare([0], [0]), trigger_count=1,
                       episode_length=10, seed=0)
    env.reset()
    env.target = tiny.id_of("z")  # level 2
    env.triggers = [tiny.id_of("p")]  # level 1
    obs, reward, done, info = env.step([NEXT_LEVEL])  # lands on y at level 2
    assert done and info["invalid"] and reward == INVALID_REWARD
    with pytest.raises(EnvContractViolation):
        env.step([NO_ACTION])


def test_step_validates_actions(tiny):
    env = InsertionEnv(tiny, _rare([0], [0]), trigger_count=1, episode_length=5)
    env.reset()
    with pytest.raises(EnvContractViolation):
        env.step([5])
    with pytest.raises(EnvContractViolation):
        env.step([0, 0])


def test_activation_reward_counts_rare_pairs(tiny):
    a, b, z = tiny.id_of("a"), tiny.id_of("b"), tiny.id_of("z")
    # SCOAP polarity of PIs is 0 (tie); both (a,0) and (b,0) are rare here
    env = InsertionEnv(tiny, _rare([a, b], [0, 0]), trigger_count=2,
                       episode_length=5, seed=3)
    env.reset()
    env.target = z
    env.triggers = [a, b]
    obs, reward, done, info = env.step([NO_ACTION, NO_ACTION])
    assert info["activated"] is True
    assert info["rare_trigger_count"] == 2
    assert reward == 16.0
    assert env.population_size == 1
    rec = env.population()[0]
    assert isinstance(rec, TrojanRecord)
    assert rec.trojan.trigger_nets == (a, b)
    assert rec.trojan.polarities == (0, 0)
    assert rec.rare_trigger_count == 2

    # same placement, but only one trigger pair is in the rare set
    env2 = InsertionEnv(tiny, _rare([a, b], [0, 1]), trigger_count=2,
                        episode_length=5, seed=3)
    env2.reset()
    env2.target = z
    env2.triggers = [a, b]
    _, reward2, _, info2 = env2.step([NO_ACTION, NO_ACTION])
    assert info2["rare_trigger_count"] == 1 and reward2 == 8.0

    # activated but resting on zero rare pairs still scores the penalty
    env3 = InsertionEnv(tiny, _rare([a], [1]), trigger_count=2,
                        episode_length=5, seed=3)
    env3.reset()
    env3.target = z
    env3.triggers = [a, b]
    _, reward3, _, info3 = env3.step([NO_ACTION, NO_ACTION])
    assert info3["activated"] is True and reward3 == INVALID_REWARD
    assert env3.population_size == 1  # recorded regardless of score


def test_budget_termination(tiny):
    env = InsertionEnv(tiny, _rare([0], [0]), trigger_count=1,
                       episode_length=3, seed=2)
    env.reset()
    env.target = tiny.id_of("z")
    env.triggers = [tiny.id_of("a")]
    for want_done in (False, False, True):
        obs, r, done, info = env.step([NO_ACTION])
        assert done is want_done


def test_high_payload_mode_filters_targets(chain):
    n2 = chain.id_of("n2")
    env = InsertionEnv(chain, _rare([n2], [0]), trigger_count=1,
                       episode_length=5, payload_mode="high", seed=0)
    # only n3 (level 3) has the rare net strictly below it
    assert env._eligible_targets == [chain.id_of("n3")]
    for _ in range(5):
        env.reset()
        assert env.target == chain.id_of("n3")


def test_reset_targets_roughly_uniform(tiny):
    env = InsertionEnv(tiny, _rare([0], [0]), trigger_count=1,
                       episode_length=5, seed=11)
    eligible = env._eligible_targets
    assert eligible == [tiny.id_of(n) for n in ("p", "q", "y", "z")]
    n = 2000
    counts = {t: 0 for t in eligible}
    for _ in range(n):
        env.reset()
        counts[env.target] += 1
    expect = n / len(eligible)
    sigma = np.sqrt(n * 0.25 * 0.75)
    for t, got in counts.items():
        assert abs(got - expect) < 4 * sigma, counts


def test_population_certified_after_random_walk(c432, c432_rare_static):
    env = InsertionEnv(c432, c432_rare_static, trigger_count=3,
                       episode_length=40, seed=5)
    rng = np.random.default_rng(6)
    obs = env.reset()
    for _ in range(300):
        obs, r, done, info = env.step(rng.integers(0, 5, size=3))
        if done:
            obs = env.reset()
    records = env.population()
    assert env.population_size == len(records)
    keys = [r.trojan.key() for r in records]
    assert keys == sorted(keys) and len(set(keys)) == len(keys)
    assert records, "random walk on c432 should certify at least one trojan"
    for rec in records:
        spliced = splice_trojan(c432, rec.trojan)
        assert compare_outputs(c432, spliced, [rec.activation_vector])
        assert rec.rare_trigger_count == sum(
            (n, p) in set(zip(c432_rare_static.net_ids,
                              c432_rare_static.rare_values))
            for n, p in zip(rec.trojan.trigger_nets, rec.trojan.polarities))


def test_harvest_trojans_filters_and_warns(tiny):
    a, b = tiny.id_of("a"), tiny.id_of("b")
    env = InsertionEnv(tiny, _rare([a, b], [0, 0]), trigger_count=1,
                       episode_length=6, seed=4)
    params = init_params(env.observation_size, env.action_space,
                         hidden=(8, 8), seed=0)
    records = harvest_trojans(env, params, episodes=6, seed=1)
    assert records == [r for r in env.population()]
    filtered = harvest_trojans(env, params, episodes=1, seed=2, min_rare_count=1)
    assert all(r.rare_trigger_count >= 1 for r in filtered)
    with pytest.warns(EmptyHarvest):
        out = harvest_trojans(env, params, episodes=1, seed=3, min_rare_count=99)
    assert out == []
