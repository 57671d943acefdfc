"""Proximal policy optimization over a single environment.

The training loop follows the widely used recipe: fixed-length rollouts,
generalized advantage estimation, several epochs of shuffled minibatch
updates with a clipped surrogate objective, entropy bonus, squared-error
value loss, per-minibatch advantage normalization, and a global gradient
norm cap.  Rewards are consumed as emitted by the environment (no reward
normalization).

Environments must provide:

* ``observation_size`` (int) and ``action_space`` (:class:`ActionSpace`),
* ``reset() -> obs`` with obs a float64 vector of that size,
* ``step(action) -> (obs, reward, done, info)``.

Episode boundaries are the environment's own business; the trainer treats
every ``done`` as terminal (no bootstrap across a reset).
"""

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import EnvContractViolation, NonFiniteLoss
from . import nets
from .nets import ActionSpace, Adam, PolicyParams

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class PpoConfig:
    total_timesteps: int
    rollout_steps: int = 2048
    epochs: int = 10
    minibatch_size: int = 64
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_ratio: float = 0.2
    learning_rate: float = 3e-4
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    hidden: tuple = (64, 64)
    seed: int = 0


@dataclass
class TrainingCurve:
    """Per-update learning statistics, one row per rollout."""

    columns = ("timestep", "mean_ep_reward", "mean_ep_len",
               "policy_loss", "value_loss", "entropy")
    rows: list = field(default_factory=list)

    def add(self, timestep, mean_ep_reward, mean_ep_len,
            policy_loss, value_loss, entropy):
        self.rows.append((int(timestep), float(mean_ep_reward),
                          float(mean_ep_len), float(policy_loss),
                          float(value_loss), float(entropy)))

    def to_csv(self) -> str:
        lines = [",".join(self.columns)]
        for row in self.rows:
            lines.append(",".join(repr(v) if isinstance(v, float) else str(v)
                                  for v in row))
        return "\n".join(lines) + "\n"

    def save(self, path):
        with open(path, "w", encoding="ascii") as fh:
            fh.write(self.to_csv())


@dataclass
class TrainSummary:
    params: PolicyParams
    curve: TrainingCurve
    episode_rewards: list
    episode_lengths: list
    final_episode_reward: float
    total_timesteps: int
    config: PpoConfig
    first_update_max_ratio_dev: float


def compute_gae(rewards, values, dones, last_value, gamma, lam):
    """Advantages and returns for one rollout.

    ``values[t]`` is V(s_t) under the rollout policy, ``last_value`` is
    V of the observation after the final step, and ``dones[t]`` marks
    transitions into a terminal state (no bootstrapping across them).
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    n = len(rewards)
    adv = np.zeros(n)
    carry = 0.0
    next_value = float(last_value)
    for t in range(n - 1, -1, -1):
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * live - values[t]
        carry = delta + gamma * lam * live * carry
        adv[t] = carry
        next_value = values[t]
    return adv, adv + values


def ppo_loss_and_grads(params: PolicyParams, obs, actions, old_logp,
                       advantages, returns, cfg: PpoConfig):
    """Clipped-surrogate loss with manual backprop through the network.

    Returns (total loss, grads, stats) where stats carries the individual
    loss terms and max |ratio - 1| over the minibatch.
    """
    logp, entropy, values, logits, probs, cache = nets.evaluate_actions(
        params, obs, actions)
    b = obs.shape[0]
    rows = np.arange(b)
    ratio = np.exp(logp - old_logp)
    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1.0 - cfg.clip_ratio, 1.0 + cfg.clip_ratio) * advantages
    policy_loss = -np.minimum(unclipped, clipped).mean()
    value_err = values - returns
    value_loss = (value_err ** 2).mean()
    mean_entropy = entropy.mean()
    total = (policy_loss + cfg.value_coef * value_loss
             - cfg.entropy_coef * mean_entropy)
    if not np.isfinite(total):
        raise NonFiniteLoss(
            f"loss diverged: policy={policy_loss} value={value_loss} "
            f"entropy={mean_entropy}")

    # d(total)/d(logp): the clipped branch is constant almost everywhere
    active = (unclipped <= clipped).astype(np.float64)
    dlogp = -(advantages * ratio * active) / b
    dvalues = cfg.value_coef * 2.0 * value_err / b
    actions = np.asarray(actions, dtype=np.int64)
    dlogits = []
    for h, (z, p) in enumerate(zip(logits, probs)):
        dz = -p * dlogp[:, None]
        dz[rows, actions[:, h]] += dlogp
        # entropy head: dH/dz_j = -p_j (log p_j + H_head)
        ls = nets.log_softmax(z)
        h_head = -(p * ls).sum(axis=1, keepdims=True)
        dz += (cfg.entropy_coef / b) * p * (ls + h_head)
        dlogits.append(dz)
    grads = nets.backward(params, cache, dlogits, dvalues)
    stats = {
        "policy_loss": float(policy_loss),
        "value_loss": float(value_loss),
        "entropy": float(mean_entropy),
        "max_ratio_dev": float(np.abs(ratio - 1.0).max()),
    }
    return float(total), grads, stats


def _check_obs(env, obs):
    arr = np.asarray(obs, dtype=np.float64)
    if arr.shape != (env.observation_size,):
        raise EnvContractViolation(
            f"observation shape {arr.shape} does not match "
            f"observation_size={env.observation_size}")
    if not np.isfinite(arr).all():
        raise EnvContractViolation("observation contains non-finite values")
    return arr


def _check_reward(r):
    r = float(r)
    if not np.isfinite(r):
        raise EnvContractViolation(f"non-finite reward {r!r}")
    return r


def train(env, cfg: PpoConfig, params: PolicyParams | None = None,
          progress=None) -> TrainSummary:
    """Run PPO until at least cfg.total_timesteps environment steps.

    ``progress(update_index, curve_row, params)`` is invoked after every
    update when given; use it for checkpointing or logging.
    """
    space: ActionSpace = env.action_space
    if params is None:
        params = nets.init_params(env.observation_size, space,
                                  hidden=tuple(cfg.hidden), seed=cfg.seed)
    opt = Adam(params, cfg.learning_rate)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x50504F]))
    curve = TrainingCurve()
    episode_rewards: list = []
    episode_lengths: list = []
    first_update_dev = float("nan")

    obs = _check_obs(env, env.reset())
    ep_ret = 0.0
    ep_len = 0
    steps_done = 0
    n_updates = -(-cfg.total_timesteps // cfg.rollout_steps)
    for update in range(n_updates):
        t_obs = np.empty((cfg.rollout_steps, env.observation_size))
        t_act = np.empty((cfg.rollout_steps, space.n_components), dtype=np.int64)
        t_logp = np.empty(cfg.rollout_steps)
        t_val = np.empty(cfg.rollout_steps)
        t_rew = np.empty(cfg.rollout_steps)
        t_done = np.empty(cfg.rollout_steps)
        window_rewards = []
        window_lengths = []
        for t in range(cfg.rollout_steps):
            act, logp, val = nets.sample_actions(params, obs[None, :], rng)
            nxt, reward, done, _ = env.step(act[0])
            reward = _check_reward(reward)
            t_obs[t] = obs
            t_act[t] = act[0]
            t_logp[t] = logp[0]
            t_val[t] = val[0]
            t_rew[t] = reward
            t_done[t] = 1.0 if done else 0.0
            ep_ret += reward
            ep_len += 1
            if done:
                episode_rewards.append(ep_ret)
                episode_lengths.append(ep_len)
                window_rewards.append(ep_ret)
                window_lengths.append(ep_len)
                ep_ret = 0.0
                ep_len = 0
                obs = _check_obs(env, env.reset())
            else:
                obs = _check_obs(env, nxt)
        steps_done += cfg.rollout_steps
        _, _, last_val = nets.sample_actions(params, obs[None, :], rng)
        adv, ret = compute_gae(t_rew, t_val, t_done, last_val[0],
                               cfg.gamma, cfg.gae_lambda)

        idx = np.arange(cfg.rollout_steps)
        stats_acc = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0}
        n_batches = 0
        for epoch in range(cfg.epochs):
            rng.shuffle(idx)
            for start in range(0, cfg.rollout_steps, cfg.minibatch_size):
                mb = idx[start:start + cfg.minibatch_size]
                a = adv[mb]
                a = (a - a.mean()) / (a.std() + 1e-8)
                _, grads, stats = ppo_loss_and_grads(
                    params, t_obs[mb], t_act[mb], t_logp[mb], a, ret[mb], cfg)
                nets.clip_grad_norm(grads, cfg.max_grad_norm)
                opt.step(params, grads)
                if update == 0 and epoch == 0 and n_batches == 0:
                    first_update_dev = stats["max_ratio_dev"]
                for k in stats_acc:
                    stats_acc[k] += stats[k]
                n_batches += 1
        mean_rew = float(np.mean(window_rewards)) if window_rewards else float("nan")
        mean_len = float(np.mean(window_lengths)) if window_lengths else float("nan")
        curve.add(steps_done, mean_rew, mean_len,
                  stats_acc["policy_loss"] / n_batches,
                  stats_acc["value_loss"] / n_batches,
                  stats_acc["entropy"] / n_batches)
        if progress is not None:
            progress(update, curve.rows[-1], params)

    final_ep = episode_rewards[-1] if episode_rewards else float("nan")
    return TrainSummary(params=params, curve=curve,
                        episode_rewards=episode_rewards,
                        episode_lengths=episode_lengths,
                        final_episode_reward=float(final_ep),
                        total_timesteps=steps_done, config=cfg,
                        first_update_max_ratio_dev=float(first_update_dev))


def run_policy(params: PolicyParams, env, episodes: int, seed: int = 0,
               deterministic: bool = False):
    """Roll the trained policy for a number of episodes; returns rewards."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x504C41]))
    totals = []
    for _ in range(int(episodes)):
        obs = _check_obs(env, env.reset())
        total = 0.0
        done = False
        while not done:
            if deterministic:
                act = nets.greedy_actions(params, obs[None, :])[0]
            else:
                act, _, _ = nets.sample_actions(params, obs[None, :], rng)
                act = act[0]
            nxt, reward, done, _ = env.step(act)
            total += _check_reward(reward)
            if not done:
                obs = _check_obs(env, nxt)
        totals.append(total)
    return totals


def save_checkpoint(path, params: PolicyParams, cfg: PpoConfig | None = None):
    meta = {
        "version": CHECKPOINT_VERSION,
        "obs_dim": params.obs_dim,
        "hidden": list(params.hidden),
        "space": {"kind": params.space.kind, "heads": list(params.space.heads)},
        "config": asdict(cfg) if cfg is not None else None,
    }
    arrays = {f"arr_{k}": v for k, v in params.arrays.items()}
    np.savez(path, meta=np.frombuffer(
        json.dumps(meta, sort_keys=True).encode("ascii"), dtype=np.uint8),
        **arrays)


def load_checkpoint(path):
    """Returns (params, config dict or None)."""
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode("ascii"))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise EnvContractViolation(
                f"unsupported checkpoint version {meta.get('version')!r}")
        space = ActionSpace(meta["space"]["kind"], tuple(meta["space"]["heads"]))
        arrays = {k[4:]: np.array(data[k]) for k in data.files
                  if k.startswith("arr_")}
    params = PolicyParams(int(meta["obs_dim"]), space,
                          tuple(meta["hidden"]), arrays)
    return params, meta.get("config")
