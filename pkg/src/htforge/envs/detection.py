"""Test-vector generation as an episodic bit-flip game over rare states.

The observation is an indicator vector over a pruned basis of rare nets:
bit i is 1 while basis net i currently sits at its rare value.  The agent
owns one test vector per episode and each action is a primary-input flip
mask (MultiBinary); after ten flips the episode ends.  Reward shaping
comes in three flavours:

* ``ssd``  (state transitions): each basis position is paid for entering
  or holding its rare state and fined for leaving or avoiding it, plus a
  count bonus for rare bits currently set.
* ``sad``  (switching activity): rare bits pay the inverse of the net's
  corpus activity, so stiller nets are worth more; a miss costs 1.
* ``cod``  (controllability): rare bits pay the SCOAP controllability of
  the rare value; a miss costs 1.

The basis is pruned before training: rare nets that are structurally
connected to a rarer representative and whose rare state is implied by
that representative's rare state (over the whole sampled corpus) ride
along with the representative instead of occupying their own position.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from ..circuit import Circuit
from ..errors import DomainError, EmptyHarvest, EnvContractViolation
from ..logic_sim import SwitchingProfile, TestVectorFile, corpus_rows, scalar_simulate
from ..rl.nets import multi_binary
from ..testability import RareNetSet, compute_scoap

MISS_REWARD = -1.0
ZERO_ACTIVITY_BOOST = 10.0


@dataclass(frozen=True)
class SsdConfig:
    """Per-position transition payoffs (previous bit, current bit)."""

    stay_off: float = -1.0   # 0 -> 0
    drop: float = -3.0       # 1 -> 0
    enter: float = 40.0      # 0 -> 1
    hold: float = 20.0       # 1 -> 1
    lambda_seq: float = 1.0
    lambda_imd: float = 1.0


def reward_ssd(prev_state, state, cfg: SsdConfig = SsdConfig()) -> float:
    prev_state = np.asarray(prev_state)
    state = np.asarray(state)
    seq = (
        cfg.stay_off * ((prev_state == 0) & (state == 0)).sum()
        + cfg.drop * ((prev_state == 1) & (state == 0)).sum()
        + cfg.enter * ((prev_state == 0) & (state == 1)).sum()
        + cfg.hold * ((prev_state == 1) & (state == 1)).sum()
    )
    imd = state.sum()
    return float(cfg.lambda_seq * seq + cfg.lambda_imd * imd)


def _indicator_sum(state, per_position) -> float:
    state = np.asarray(state, dtype=bool)
    return float(np.where(state, per_position, MISS_REWARD).sum())


def sad_position_rewards(activities) -> np.ndarray:
    """1/activity per position; zero-activity nets get ten times the max.

    The max is taken over the nonzero positions before substitution (a
    lone zero-activity basis falls back to the boost constant itself).
    """
    act = np.asarray(activities, dtype=np.float64)
    out = np.zeros(len(act))
    nonzero = act > 0.0
    out[nonzero] = 1.0 / act[nonzero]
    top = out[nonzero].max() if nonzero.any() else 1.0
    out[~nonzero] = ZERO_ACTIVITY_BOOST * top
    return out


def reward_sad(state, position_rewards) -> float:
    return _indicator_sum(state, position_rewards)


def cod_position_rewards(circuit: Circuit, rep_ids, rare_values) -> np.ndarray:
    """SCOAP controllability of each representative's rare value."""
    table = compute_scoap(circuit)
    vals = [
        table.cc1[n] if rv == 1 else table.cc0[n]
        for n, rv in zip(rep_ids, rare_values)
    ]
    return np.asarray(vals, dtype=np.float64)


def reward_cod(state, position_rewards) -> float:
    return _indicator_sum(state, position_rewards)


# --- basis pruning -----------------------------------------------------------------


@dataclass(frozen=True)
class PrunedBasis:
    """Rare-net representatives and the members they speak for.

    ``rep_ids`` ascends by net id; ``groups[rep]`` lists the member nets
    (the representative first).  ``activities`` are corpus activities of
    the representatives, used by the sad reward.
    """

    rep_ids: tuple
    rare_values: tuple
    activities: tuple
    groups: dict

    @property
    def size(self) -> int:
        return len(self.rep_ids)

    @property
    def member_count(self) -> int:
        return sum(len(v) for v in self.groups.values())


def _reachable(circuit: Circuit, start: int, forward: bool) -> set:
    seen = {start}
    stack = [start]
    while stack:
        net = stack.pop()
        if forward:
            steps = [circuit.gates[gi].out for gi in circuit.fanout_gates[net]]
        else:
            gi = circuit.driver_gate.get(net)
            steps = list(circuit.gates[gi].ins) if gi is not None else []
        for nxt in steps:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return seen


def prune_states(circuit: Circuit, rare: RareNetSet,
                 profile: SwitchingProfile) -> PrunedBasis:
    """Group rare nets under rarer representatives.

    Nets are visited by ascending (activity, net id).  An unvisited net
    becomes a representative and absorbs every remaining net that (a) has
    a directed path to or from it and (b) holds its own rare value on
    every corpus vector where the representative holds its rare value.
    A representative whose rare value never occurs in the corpus absorbs
    nothing: the vacuous implication carries no evidence.
    """
    k = len(rare.net_ids)
    if k == 0:
        return PrunedBasis((), (), (), {})
    words = corpus_rows(circuit, rare.net_ids, profile.n, profile.seed)
    masks = np.empty_like(words)
    for j in range(k):
        masks[j] = words[j] if rare.rare_values[j] == 1 else ~words[j]
    tail = profile.n % 64
    if tail:
        masks[:, -1] &= np.uint64((1 << tail) - 1)
    support = np.bitwise_count(masks).sum(axis=1)

    activity = [float(profile.activity[n]) for n in rare.net_ids]
    order = sorted(range(k), key=lambda j: (activity[j], rare.net_ids[j]))
    assigned = [False] * k
    groups = {}
    for j in order:
        if assigned[j]:
            continue
        assigned[j] = True
        rep = rare.net_ids[j]
        members = [rep]
        if support[j] > 0:
            linked = _reachable(circuit, rep, forward=True) | _reachable(
                circuit, rep, forward=False)
            for m in order:
                if assigned[m] or rare.net_ids[m] not in linked:
                    continue
                if not (masks[j] & ~masks[m]).any():
                    assigned[m] = True
                    members.append(rare.net_ids[m])
        groups[rep] = tuple(members)

    reps = sorted(groups)
    idx_of = {n: i for i, n in enumerate(rare.net_ids)}
    return PrunedBasis(
        tuple(reps),
        tuple(rare.rare_values[idx_of[r]] for r in reps),
        tuple(activity[idx_of[r]] for r in reps),
        {r: groups[r] for r in reps},
    )


# --- environment -------------------------------------------------------------------


class DetectionEnv:
    """Bit-flip search for vectors that drive pruned rare nets rare.

    Args:
        circuit: golden host circuit.
        basis: pruned rare-net basis (observation positions).
        mode: "ssd", "sad" or "cod" reward shaping.
        episode_length: flips per episode (the conventional budget is 10).
        seed: drives the per-episode starting vectors.
        ssd: transition payoffs for the ssd mode.
    """

    def __init__(self, circuit: Circuit, basis: PrunedBasis, mode: str = "ssd",
                 episode_length: int = 10, seed: int = 0,
                 ssd: SsdConfig = SsdConfig()):
        if mode not in ("ssd", "sad", "cod"):
            raise EnvContractViolation(f"unknown detection mode {mode!r}")
        if basis.size == 0:
            raise EnvContractViolation("detection needs a non-empty basis")
        self.circuit = circuit
        self.basis = basis
        self.mode = mode
        self.episode_length = int(episode_length)
        self.ssd_config = ssd
        self._rng = np.random.default_rng(np.random.SeedSequence([seed, 0x444554]))
        self.action_space = multi_binary(len(circuit.inputs))
        self.observation_size = basis.size
        self._rep_ids = np.asarray(basis.rep_ids, dtype=np.int64)
        self._rare_vals = np.asarray(basis.rare_values, dtype=np.int64)
        if mode == "sad":
            self._position_rewards = sad_position_rewards(basis.activities)
        elif mode == "cod":
            self._position_rewards = cod_position_rewards(
                circuit, basis.rep_ids, basis.rare_values)
        else:
            self._position_rewards = None
        self._vector = None
        self._state = None
        self._steps = 0
        self._done = True

    def _evaluate(self):
        values = scalar_simulate(self.circuit, "".join(
            str(b) for b in self._vector))
        net_vals = np.asarray([values[n] for n in self._rep_ids], dtype=np.int64)
        return (net_vals == self._rare_vals).astype(np.float64)

    def reset(self):
        self._vector = self._rng.integers(
            0, 2, size=len(self.circuit.inputs), dtype=np.uint8)
        self._state = self._evaluate()
        self._steps = 0
        self._done = False
        return self._state.copy()

    @property
    def vector_string(self) -> str:
        return "".join(str(int(b)) for b in self._vector)

    def step(self, action):
        if self._done:
            raise EnvContractViolation("step() called on a finished episode")
        action = np.asarray(action)
        if not self.action_space.contains(action):
            raise EnvContractViolation(f"action {action!r} outside action space")
        self._vector ^= action.astype(np.uint8)
        prev = self._state
        self._state = self._evaluate()
        if self.mode == "ssd":
            reward = reward_ssd(prev, self._state, self.ssd_config)
        elif self.mode == "sad":
            reward = reward_sad(self._state, self._position_rewards)
        else:
            reward = reward_cod(self._state, self._position_rewards)
        self._steps += 1
        self._done = self._steps >= self.episode_length
        info = {"vector": self.vector_string}
        return self._state.copy(), reward, self._done, info


def harvest_vectors(params, env: DetectionEnv, episodes: int = 20000,
                    cutoff="tenth", final_episode_reward=None,
                    seed: int = 0) -> TestVectorFile:
    """Collect the vectors visited during high-reward policy episodes.

    ``cutoff`` selects which episodes contribute their vectors:
    "tenth" keeps episodes scoring at least a tenth of
    ``final_episode_reward`` (the last training episode's total),
    "positive" keeps strictly positive episodes, and a number is an
    explicit threshold.  Vectors are deduplicated preserving first-seen
    order.
    """
    from ..rl.nets import sample_actions

    if cutoff == "tenth":
        if final_episode_reward is None or not np.isfinite(final_episode_reward):
            raise DomainError(
                "cutoff 'tenth' needs the final training episode reward")
        threshold = 0.1 * float(final_episode_reward)
    elif cutoff == "positive":
        threshold = None
    else:
        threshold = float(cutoff)

    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x484152]))
    width = len(env.circuit.inputs)
    seen = {}
    for _ in range(int(episodes)):
        obs = env.reset()
        total = 0.0
        episode_vectors = []
        done = False
        while not done:
            act, _, _ = sample_actions(params, obs[None, :], rng)
            obs, reward, done, info = env.step(act[0])
            total += reward
            episode_vectors.append(info["vector"])
        keep = total > 0.0 if threshold is None else total >= threshold
        if keep:
            for v in episode_vectors:
                seen.setdefault(v, None)
    rows = list(seen)
    if not rows:
        warnings.warn("no episode met the harvest cutoff; empty vector set",
                      EmptyHarvest)
    return TestVectorFile(width, rows)
