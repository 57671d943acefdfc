import json

import numpy as np
import pytest

from htforge.errors import EnvContractViolation, NonFiniteLoss, ShapeMismatch
from htforge.rl.nets import (
    ActionSpace,
    Adam,
    PolicyParams,
    clip_grad_norm,
    evaluate_actions,
    forward,
    greedy_actions,
    init_params,
    log_softmax,
    multi_binary,
    multi_discrete,
    sample_actions,
    space_from_json,
    space_to_json,
)
from htforge.rl.ppo import (
    CHECKPOINT_VERSION,
    PpoConfig,
    TrainingCurve,
    compute_gae,
    load_checkpoint,
    ppo_loss_and_grads,
    run_policy,
    save_checkpoint,
    train,
)


# --- environment stubs --------------------------------------------------------------

class BanditEnv:
    """One-step episodes; arm k pays rewards[k]."""

    observation_size = 1

    def __init__(self, rewards=(1.0, 0.0)):
        self.action_space = multi_discrete([len(rewards)])
        self._rewards = rewards

    def reset(self):
        return np.zeros(1)

    def step(self, action):
        return np.zeros(1), float(self._rewards[int(action[0])]), True, {}


class CounterEnv:
    """Deterministic five-step episodes with reward 1 per step."""

    observation_size = 1

    def __init__(self):
        self.action_space = multi_discrete([2])
        self._t = 0

    def reset(self):
        self._t = 0
        return np.zeros(1)

    def step(self, action):
        self._t += 1
        return np.array([self._t / 5.0]), 1.0, self._t >= 5, {}


class BrokenEnv(CounterEnv):
    def __init__(self, bad_obs=False, bad_reward=False):
        super().__init__()
        self._bad_obs = bad_obs
        self._bad_reward = bad_reward

    def reset(self):
        super().reset()
        return np.zeros(2) if self._bad_obs else np.zeros(1)

    def step(self, action):
        obs, r, done, info = super().step(action)
        if self._bad_reward:
            r = float("inf")
        return obs, r, done, info


# --- action spaces and network ------------------------------------------------------

def test_action_space_basics():
    sp = multi_discrete([5, 5, 3])
    assert sp.kind == "multidiscrete" and sp.heads == (5, 5, 3)
    assert sp.n_components == 3
    assert sp.contains([0, 4, 2])
    assert not sp.contains([0, 5, 2])
    assert not sp.contains([0, 4])
    assert not sp.contains([-1, 0, 0])
    mb = multi_binary(4)
    assert mb.heads == (2, 2, 2, 2) and mb.contains([1, 0, 1, 1])
    with pytest.raises(ShapeMismatch):
        ActionSpace("box", (2,))
    with pytest.raises(ShapeMismatch):
        multi_discrete([3, 1])
    with pytest.raises(ShapeMismatch):
        multi_discrete([])


def test_space_json_round_trip():
    sp = multi_discrete([4, 2, 7])
    assert space_from_json(space_to_json(sp)) == sp


def test_init_params_shapes_and_orthogonality():
    sp = multi_discrete([5, 3])
    p = init_params(4, sp, hidden=(16, 12), seed=1)
    a = p.arrays
    assert a["w0"].shape == (4, 16) and a["w1"].shape == (16, 12)
    assert a["h0w"].shape == (12, 5) and a["h1w"].shape == (12, 3)
    assert a["vw"].shape == (12, 1)
    # orthogonal rows with gain sqrt(2) on the trunk
    np.testing.assert_allclose(a["w0"] @ a["w0"].T, 2.0 * np.eye(4), atol=1e-12)
    # policy heads start near zero (gain 0.01), value head at gain 1
    np.testing.assert_allclose(a["h0w"].T @ a["h0w"], 1e-4 * np.eye(5), atol=1e-14)
    np.testing.assert_allclose(a["vw"].T @ a["vw"], [[1.0]], atol=1e-12)
    for b in ("b0", "b1", "h0b", "h1b", "vb"):
        assert not a[b].any()
    assert p.names()[-2:] == ["vw", "vb"]
    assert set(p.names()) == set(a.keys())


def test_forward_shape_validation():
    p = init_params(3, multi_discrete([2]), hidden=(4, 4))
    with pytest.raises(ShapeMismatch):
        forward(p, np.zeros((2, 4)))
    with pytest.raises(ShapeMismatch):
        forward(p, np.zeros(3))


def test_log_softmax_stable_and_normalized():
    z = np.array([[1000.0, 0.0], [-3.0, 5.0]])
    ls = log_softmax(z)
    assert np.isfinite(ls).all()
    np.testing.assert_allclose(np.exp(ls).sum(axis=1), [1.0, 1.0])


def _zero_heads(params):
    for i in range(params.space.n_components):
        params.arrays[f"h{i}w"][:] = 0.0
        params.arrays[f"h{i}b"][:] = 0.0


def test_uniform_policy_entropy_and_logp():
    sp = multi_discrete([3, 2, 4])
    p = init_params(5, sp, hidden=(8, 8), seed=2)
    _zero_heads(p)
    obs = np.random.default_rng(0).normal(size=(6, 5))
    actions = np.zeros((6, 3), dtype=np.int64)
    logp, entropy, values, *_ = evaluate_actions(p, obs, actions)
    want_h = sum(np.log(k) for k in sp.heads)
    np.testing.assert_allclose(entropy, want_h)
    np.testing.assert_allclose(logp, -want_h)
    assert values.shape == (6,)


def test_sample_actions_deterministic_and_consistent():
    sp = multi_discrete([3, 2])
    p = init_params(4, sp, hidden=(8, 8), seed=3)
    obs = np.random.default_rng(1).normal(size=(50, 4))
    a1, lp1, v1 = sample_actions(p, obs, np.random.default_rng(42))
    a2, lp2, v2 = sample_actions(p, obs, np.random.default_rng(42))
    np.testing.assert_array_equal(a1, a2)
    np.testing.assert_array_equal(lp1, lp2)
    # reported logp must agree with evaluate_actions on the sampled rows
    lp_eval, _, v_eval, *_ = evaluate_actions(p, obs, a1)
    np.testing.assert_allclose(lp1, lp_eval)
    np.testing.assert_allclose(v1, v_eval)
    assert all(sp.contains(row) for row in a1)


def test_sample_actions_matches_uniform_frequencies():
    sp = multi_discrete([4])
    p = init_params(2, sp, hidden=(4, 4), seed=4)
    _zero_heads(p)
    obs = np.zeros((8000, 2))
    acts, _, _ = sample_actions(p, obs, np.random.default_rng(7))
    freq = np.bincount(acts[:, 0], minlength=4) / 8000
    np.testing.assert_allclose(freq, 0.25, atol=0.02)


def test_greedy_actions_argmax():
    sp = multi_discrete([3, 2])
    p = init_params(2, sp, hidden=(4, 4), seed=5)
    obs = np.random.default_rng(2).normal(size=(9, 2))
    logits, _, _ = forward(p, obs)
    want = np.stack([z.argmax(axis=1) for z in logits], axis=1)
    np.testing.assert_array_equal(greedy_actions(p, obs), want)


def test_clip_grad_norm_semantics():
    grads = {"a": np.array([3.0]), "b": np.array([4.0])}
    norm = clip_grad_norm(grads, 0.5)
    assert norm == pytest.approx(5.0)
    scaled = np.sqrt(grads["a"] ** 2 + grads["b"] ** 2)[0]
    assert scaled == pytest.approx(0.5, rel=1e-6)
    grads = {"a": np.array([0.3])}
    assert clip_grad_norm(grads, 0.5) == pytest.approx(0.3)
    assert grads["a"][0] == 0.3  # already under the cap: untouched
    grads = {"a": np.array([30.0])}
    assert clip_grad_norm(grads, 0.0) == pytest.approx(30.0)
    assert grads["a"][0] == 30.0  # cap of zero disables clipping


def test_adam_single_step_by_hand():
    sp = multi_discrete([2])
    p = PolicyParams(1, sp, (1, 1), {"x": np.array([1.0])})
    opt = Adam(p, lr=0.1)
    opt.step(p, {"x": np.array([0.5])})
    # bias-corrected m=0.5, v=0.25 after one step
    want = 1.0 - 0.1 * 0.5 / (np.sqrt(0.25) + 1e-8)
    assert p.arrays["x"][0] == pytest.approx(want, rel=1e-12)
    assert opt.t == 1


# --- GAE ---------------------------------------------------------------------------

def _gae_reference(rewards, values, dones, last_value, gamma, lam):
    n = len(rewards)
    next_vals = np.append(values[1:], last_value)
    deltas = rewards + gamma * next_vals * (1.0 - dones) - values
    adv = np.zeros(n)
    for t in range(n):
        acc, w = 0.0, 1.0
        for l in range(t, n):
            acc += w * deltas[l]
            if dones[l]:
                break
            w *= gamma * lam
        adv[t] = acc
    return adv, adv + values


@pytest.mark.parametrize("gamma,lam", [(0.99, 0.95), (1.0, 1.0), (0.9, 0.0)])
def test_gae_matches_brute_force(gamma, lam):
    rng = np.random.default_rng(13)
    for _ in range(8):
        n = int(rng.integers(3, 40))
        rewards = rng.normal(size=n)
        values = rng.normal(size=n)
        dones = (rng.random(n) < 0.2).astype(float)
        last = float(rng.normal())
        adv, ret = compute_gae(rewards, values, dones, last, gamma, lam)
        adv_ref, ret_ref = _gae_reference(rewards, values, dones, last, gamma, lam)
        np.testing.assert_allclose(adv, adv_ref, atol=1e-12)
        np.testing.assert_allclose(ret, ret_ref, atol=1e-12)


def test_gae_terminal_cuts_bootstrap():
    # single step, terminal: advantage is just r - v regardless of last_value
    adv, ret = compute_gae([2.0], [0.5], [1.0], 100.0, 0.99, 0.95)
    assert adv[0] == pytest.approx(1.5)
    assert ret[0] == pytest.approx(2.0)


# --- PPO loss gradients --------------------------------------------------------------

def _loss_setup(ratio_shift=0.0):
    cfg = PpoConfig(total_timesteps=1)
    sp = multi_discrete([3, 2])
    params = init_params(3, sp, hidden=(8, 7), seed=11)
    rng = np.random.default_rng(17)
    obs = rng.normal(size=(5, 3))
    actions, logp, _ = sample_actions(params, obs, rng)
    old_logp = logp - ratio_shift
    adv = rng.normal(size=5)
    ret = rng.normal(size=5)
    return params, (obs, actions, old_logp, adv, ret, cfg)


@pytest.mark.parametrize("shift", [0.0, 0.4, -0.4])
def test_loss_gradients_match_finite_differences(shift):
    params, args = _loss_setup(shift)
    total, grads, _ = ppo_loss_and_grads(params, *args)
    eps = 1e-6
    rng = np.random.default_rng(23)
    for key in params.names():
        flat = params.arrays[key].ravel()
        idxs = rng.choice(flat.size, size=min(6, flat.size), replace=False)
        for idx in idxs:
            orig = flat[idx]
            flat[idx] = orig + eps
            up, _, _ = ppo_loss_and_grads(params, *args)
            flat[idx] = orig - eps
            dn, _, _ = ppo_loss_and_grads(params, *args)
            flat[idx] = orig
            fd = (up - dn) / (2 * eps)
            an = grads[key].ravel()[idx]
            assert fd == pytest.approx(an, rel=2e-4, abs=1e-7), (key, idx)


def test_loss_clipped_branch_blocks_policy_gradient():
    # ratios pushed far above 1+clip with positive advantages: the policy
    # term is saturated, so only value/entropy gradients remain
    cfg = PpoConfig(total_timesteps=1, entropy_coef=0.0, value_coef=0.0)
    sp = multi_discrete([2])
    params = init_params(2, sp, hidden=(4, 4), seed=6)
    rng = np.random.default_rng(3)
    obs = rng.normal(size=(4, 2))
    actions, logp, _ = sample_actions(params, obs, rng)
    _, grads, stats = ppo_loss_and_grads(
        params, obs, actions, logp - 1.0, np.ones(4), np.zeros(4), cfg)
    assert stats["max_ratio_dev"] > cfg.clip_ratio
    for g in grads.values():
        np.testing.assert_allclose(g, 0.0, atol=1e-12)


def test_loss_rejects_non_finite():
    params, (obs, actions, old_logp, adv, ret, cfg) = _loss_setup()
    adv = adv.copy()
    adv[0] = np.inf
    with pytest.raises(NonFiniteLoss):
        ppo_loss_and_grads(params, obs, actions, old_logp, adv, ret, cfg)


# --- training loop -------------------------------------------------------------------

def test_train_bandit_finds_best_arm():
    env = BanditEnv(rewards=(1.0, 0.0, 0.2))
    cfg = PpoConfig(total_timesteps=8192, rollout_steps=256, epochs=4,
                    minibatch_size=64, hidden=(16, 16), seed=0)
    summary = train(env, cfg)
    assert summary.total_timesteps == 8192
    assert len(summary.curve.rows) == 32
    # ratio deviation on the very first minibatch must be exactly zero
    assert summary.first_update_max_ratio_dev == 0.0
    obs = np.zeros((4000, 1))
    acts, _, _ = sample_actions(summary.params, obs, np.random.default_rng(9))
    p_best = float((acts[:, 0] == 0).mean())
    assert p_best > 0.9
    assert summary.episode_rewards.count(1.0) > len(summary.episode_rewards) // 2


def test_train_is_deterministic():
    cfg = PpoConfig(total_timesteps=512, rollout_steps=128, epochs=2,
                    minibatch_size=32, hidden=(8, 8), seed=5)
    s1 = train(BanditEnv(), cfg)
    s2 = train(BanditEnv(), cfg)
    assert s1.curve.rows == s2.curve.rows
    for k in s1.params.names():
        np.testing.assert_array_equal(s1.params.arrays[k], s2.params.arrays[k])


def test_train_rejects_contract_violations():
    cfg = PpoConfig(total_timesteps=64, rollout_steps=32, hidden=(4, 4))
    with pytest.raises(EnvContractViolation):
        train(BrokenEnv(bad_obs=True), cfg)
    with pytest.raises(EnvContractViolation):
        train(BrokenEnv(bad_reward=True), cfg)


def test_training_curve_csv(tmp_path):
    curve = TrainingCurve()
    curve.add(128, -1.5, 10.0, 0.01, 2.0, 1.09)
    curve.add(256, 0.5, 9.0, -0.02, 1.5, 1.01)
    text = curve.to_csv()
    lines = text.strip().split("\n")
    assert lines[0] == "timestep,mean_ep_reward,mean_ep_len,policy_loss,value_loss,entropy"
    assert len(lines) == 3
    path = tmp_path / "curve.csv"
    curve.save(path)
    assert path.read_text() == text
    row = lines[1].split(",")
    assert int(row[0]) == 128 and float(row[1]) == -1.5


def test_run_policy_deterministic():
    p = init_params(1, multi_discrete([2]), hidden=(4, 4), seed=8)
    r1 = run_policy(p, CounterEnv(), episodes=3, seed=21)
    r2 = run_policy(p, CounterEnv(), episodes=3, seed=21)
    assert r1 == r2 == [5.0, 5.0, 5.0]
    greedy = run_policy(p, CounterEnv(), episodes=2, seed=0, deterministic=True)
    assert greedy == [5.0, 5.0]


# --- checkpoints ---------------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    cfg = PpoConfig(total_timesteps=100, hidden=(8, 8), seed=3)
    params = init_params(4, multi_discrete([5, 5]), hidden=(8, 8), seed=3)
    path = tmp_path / "policy.npz"
    save_checkpoint(path, params, cfg)
    loaded, cfg_dict = load_checkpoint(path)
    assert loaded.obs_dim == 4
    assert loaded.space == params.space
    assert loaded.hidden == (8, 8)
    for k in params.names():
        np.testing.assert_array_equal(loaded.arrays[k], params.arrays[k])
    assert cfg_dict["total_timesteps"] == 100
    assert cfg_dict["seed"] == 3


def test_checkpoint_bytes_deterministic(tmp_path):
    params = init_params(3, multi_binary(2), hidden=(4, 4), seed=1)
    a, b = tmp_path / "a.npz", tmp_path / "b.npz"
    save_checkpoint(a, params)
    save_checkpoint(b, params)
    assert a.read_bytes() == b.read_bytes()


def test_checkpoint_version_mismatch(tmp_path):
    params = init_params(2, multi_discrete([2]), hidden=(4, 4))
    path = tmp_path / "old.npz"
    meta = {"version": CHECKPOINT_VERSION + 1, "obs_dim": 2,
            "hidden": [4, 4], "space": {"kind": "multidiscrete", "heads": [2]},
            "config": None}
    np.savez(path, meta=np.frombuffer(
        json.dumps(meta).encode("ascii"), dtype=np.uint8),
        **{f"arr_{k}": v for k, v in params.arrays.items()})
    with pytest.raises(EnvContractViolation):
        load_checkpoint(path)
