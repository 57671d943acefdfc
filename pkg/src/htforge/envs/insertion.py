"""Trojan insertion as an episodic placement game.

The agent steers a set of trigger markers across the levelized host
circuit; the payload target stays fixed for the episode.  Every step the
current placement is spliced as a candidate trojan and scored: a placement
whose activation vector exists earns a reward that grows steeply with the
number of triggers sitting on rare nets, anything unactivatable (or any
trigger colliding with the target's level) earns -1.

Observations are the levels of the trigger nets followed by the target
level and the payload level (one above the target, where the spliced XOR
lands).  Actions are one move code per trigger:

====  ==============================================================
code  effect on trigger i
====  ==============================================================
0     jump to a random net one level up (toward the outputs)
1     jump to a random net one level down
2     slide to the next-higher net id on the same level
3     slide to the next-lower net id on the same level
4     stay put
====  ==============================================================

Random jumps exclude the target net and nets already holding a marker;
slides that would land on an occupied net, the target, or run off the end
of the level degenerate to "stay put".  Every activated placement is
remembered (deduplicated by trigger/target identity), so a long run
doubles as a trojan population generator.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from ..atpg import VECTOR, activation_vector
from ..circuit import Circuit, TrojanInstance, splice_trojan
from ..errors import EmptyHarvest, EnvContractViolation, InfeasibleReset
from ..logic_sim import _random_pi_words, _simulate_words, compare_outputs
from ..rl.nets import multi_discrete
from ..testability import RareNetSet, compute_scoap, rare_values_from_scoap

NEXT_LEVEL = 0
PREV_LEVEL = 1
SAME_LEVEL_UP = 2
SAME_LEVEL_DOWN = 3
NO_ACTION = 4

# reward by number of triggers resting on rare nets at rare polarity;
# larger counts saturate at the top entry
ACTIVATION_REWARDS = {1: 8.0, 2: 16.0, 3: 100.0, 4: 1000.0, 5: 10000.0}
INVALID_REWARD = -1.0


@dataclass(frozen=True)
class TrojanRecord:
    """One certified trojan discovered during training or rollout."""

    trojan: TrojanInstance
    rare_trigger_count: int
    activation_vector: str
    payload_mode: str


def reward_for_rare_count(count: int) -> float:
    """Reward for an activated placement with ``count`` rare triggers."""
    if count <= 0:
        return INVALID_REWARD
    top = max(ACTIVATION_REWARDS)
    return ACTIVATION_REWARDS[min(count, top)]


class InsertionEnv:
    """Level-walk trojan placement over a fixed host circuit.

    Args:
        circuit: golden host.
        rare: rare-net set used both to count rare triggers and (for
            membership scoring) to decide polarity agreement.
        trigger_count: number of trigger markers (defaults to 5).
        episode_length: step budget per episode.
        payload_mode: "rand" places the target uniformly over feasible
            nets; "high" additionally requires at least 80% of the rare
            nets to sit strictly below the target's level.
        backtrack_limit: per-step ATPG budget; searches that exhaust it
            count as not activated.
        seed: drives target/trigger sampling and random jumps.

    Activation checks are two-staged: a fixed random vector block is
    simulated against each candidate first (most easy placements show an
    output difference there, and the differing vector doubles as the
    activation witness); only candidates silent on the whole block go to
    the backtracking search.
    """

    HIGH_RARE_BELOW = 0.80
    PREFILTER_VECTORS = 8192

    def __init__(self, circuit: Circuit, rare: RareNetSet, trigger_count: int = 5,
                 episode_length: int = 450, payload_mode: str = "rand",
                 backtrack_limit: int = 200, seed: int = 0):
        if payload_mode not in ("rand", "high"):
            raise EnvContractViolation(f"unknown payload mode {payload_mode!r}")
        if trigger_count < 1:
            raise EnvContractViolation("at least one trigger is required")
        if episode_length < 1:
            raise EnvContractViolation("episode_length must be positive")
        self.circuit = circuit
        self.rare = rare
        self.trigger_count = int(trigger_count)
        self.episode_length = int(episode_length)
        self.payload_mode = payload_mode
        self.backtrack_limit = int(backtrack_limit)
        self._rng = np.random.default_rng(np.random.SeedSequence([seed, 0x494E53]))
        self.action_space = multi_discrete([5] * self.trigger_count)
        self.observation_size = self.trigger_count + 2

        self._polarity = rare_values_from_scoap(compute_scoap(circuit))
        self._rare_pairs = set(zip(rare.net_ids, rare.rare_values))
        self._rare_levels = np.asarray(
            [int(circuit.levels[n]) for n in rare.net_ids], dtype=np.int64)
        self._eligible_targets = self._feasible_targets()
        if not self._eligible_targets:
            raise InfeasibleReset(
                f"no net in {circuit.name!r} admits {trigger_count} triggers "
                f"below it under payload mode {payload_mode!r}")

        pre_rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence([seed, 0x505245])))
        n_pre = self.PREFILTER_VECTORS
        self._pre_n = n_pre
        self._pre_pi_words = _random_pi_words(
            pre_rng, len(circuit.inputs), n_pre, (n_pre + 63) // 64)
        self._po_ids = list(dict.fromkeys(circuit.outputs))
        golden_vals = _simulate_words(circuit, self._pre_pi_words, n_pre)
        self._pre_po_golden = golden_vals[self._po_ids].copy()

        self._activation_cache: dict = {}
        self._population: dict = {}
        self.target = None
        self.triggers: list = []
        self._steps = 0
        self._done = True

    # -- reset machinery --------------------------------------------------------

    def _feasible_targets(self) -> list:
        levels = self.circuit.levels
        order = np.sort(levels)
        eligible = []
        n_rare = len(self._rare_levels)
        for net in range(self.circuit.num_nets):
            lv = int(levels[net])
            below = int(np.searchsorted(order, lv, side="left"))
            if below < self.trigger_count:
                continue
            if self.payload_mode == "high" and n_rare:
                frac = float((self._rare_levels < lv).sum()) / n_rare
                if frac < self.HIGH_RARE_BELOW:
                    continue
            eligible.append(net)
        return eligible

    def reset(self):
        self.target = int(self._rng.choice(self._eligible_targets))
        tgt_level = int(self.circuit.levels[self.target])
        below = np.flatnonzero(self.circuit.levels < tgt_level)
        picks = self._rng.choice(below, size=self.trigger_count, replace=False)
        self.triggers = [int(p) for p in picks]
        self._steps = 0
        self._done = False
        return self._observe()

    def _observe(self):
        levels = self.circuit.levels
        obs = [float(levels[t]) for t in self.triggers]
        tgt = float(levels[self.target])
        obs += [tgt, tgt + 1.0]
        return np.asarray(obs, dtype=np.float64)

    # -- moves ----------------------------------------------------------------------

    def _occupied(self, except_idx: int) -> set:
        occ = {self.target}
        occ.update(t for j, t in enumerate(self.triggers) if j != except_idx)
        return occ

    def _jump(self, idx: int, level: int):
        if level < 0 or level > self.circuit.max_level:
            return
        occupied = self._occupied(idx)
        candidates = [n for n in self.circuit.nets_at_level(level)
                      if n not in occupied]
        if not candidates:
            return
        self.triggers[idx] = int(self._rng.choice(candidates))

    def _slide(self, idx: int, direction: int):
        cur = self.triggers[idx]
        peers = self.circuit.nets_at_level(int(self.circuit.levels[cur]))
        pos = peers.index(cur) + direction
        if pos < 0 or pos >= len(peers):
            return
        dest = peers[pos]
        if dest in self._occupied(idx):
            return
        self.triggers[idx] = dest

    def _apply_action(self, action):
        levels = self.circuit.levels
        for idx, code in enumerate(action):
            code = int(code)
            if code == NO_ACTION:
                continue
            if code == NEXT_LEVEL:
                self._jump(idx, int(levels[self.triggers[idx]]) + 1)
            elif code == PREV_LEVEL:
                self._jump(idx, int(levels[self.triggers[idx]]) - 1)
            elif code == SAME_LEVEL_UP:
                self._slide(idx, +1)
            elif code == SAME_LEVEL_DOWN:
                self._slide(idx, -1)
            else:
                raise EnvContractViolation(f"action code {code} out of range")

    # -- scoring -----------------------------------------------------------------------

    def _current_trojan(self) -> TrojanInstance:
        nets = tuple(self.triggers)
        pols = tuple(int(self._polarity[n]) for n in nets)
        return TrojanInstance(nets, pols, self.target)

    def _rare_count(self, trojan: TrojanInstance) -> int:
        return sum((n, p) in self._rare_pairs
                   for n, p in zip(trojan.trigger_nets, trojan.polarities))

    def _prefilter_vector(self, spliced: Circuit):
        """Vector from the fixed random block that flips a PO, or None."""
        vals = _simulate_words(spliced, self._pre_pi_words, self._pre_n)
        diff = np.bitwise_or.reduce(
            vals[self._po_ids] ^ self._pre_po_golden, axis=0)
        nz = np.flatnonzero(diff)
        if not nz.size:
            return None
        w = int(nz[0])
        word = int(diff[w])
        k = w * 64 + (word & -word).bit_length() - 1
        shift = np.uint64(k % 64)
        col = (self._pre_pi_words[:, k // 64] >> shift) & np.uint64(1)
        return "".join("1" if b else "0" for b in col)

    def _activation(self, trojan: TrojanInstance):
        """Memoized activation vector lookup; None when not activatable."""
        key = trojan.key()
        if key in self._activation_cache:
            return self._activation_cache[key]
        spliced = splice_trojan(self.circuit, trojan)
        vec = self._prefilter_vector(spliced)
        if vec is not None:
            if not compare_outputs(self.circuit, spliced, [vec]):
                raise RuntimeError("prefilter vector failed dual-simulation check")
        else:
            result = activation_vector(self.circuit, trojan,
                                       limit=self.backtrack_limit, spliced=spliced)
            vec = result.vector if result.outcome == VECTOR else None
        self._activation_cache[key] = vec
        return vec

    def step(self, action):
        if self._done:
            raise EnvContractViolation("step() called on a finished episode")
        action = np.asarray(action)
        if not self.action_space.contains(action):
            raise EnvContractViolation(f"action {action!r} outside action space")
        self._apply_action(action)
        self._steps += 1

        tgt_level = int(self.circuit.levels[self.target])
        trig_levels = [int(self.circuit.levels[t]) for t in self.triggers]
        info = {"triggers": tuple(self.triggers), "target": self.target}
        if any(lv == tgt_level for lv in trig_levels):
            self._done = True
            info["invalid"] = True
            return self._observe(), INVALID_REWARD, True, info

        trojan = self._current_trojan()
        vec = self._activation(trojan)
        if vec is None:
            reward = INVALID_REWARD
            info["activated"] = False
        else:
            count = self._rare_count(trojan)
            reward = reward_for_rare_count(count)
            info["activated"] = True
            info["rare_trigger_count"] = count
            key = trojan.key()
            if key not in self._population:
                self._population[key] = TrojanRecord(
                    trojan, count, vec, self.payload_mode)
        self._done = self._steps >= self.episode_length
        return self._observe(), reward, self._done, info

    # -- population access ----------------------------------------------------------

    @property
    def population_size(self) -> int:
        return len(self._population)

    def population(self) -> list:
        """Certified trojans found so far, in deterministic key order."""
        return [self._population[k] for k in sorted(self._population)]


def harvest_trojans(env: InsertionEnv, params, episodes: int, seed: int = 0,
                    min_rare_count: int = 0) -> list:
    """Roll a trained policy and return the accumulated trojan population.

    The environment keeps recording during the rollout, so the result also
    contains anything discovered earlier (training included).
    """
    from ..rl.ppo import run_policy

    run_policy(params, env, episodes, seed=seed)
    records = [r for r in env.population()
               if r.rare_trigger_count >= min_rare_count]
    if not records:
        warnings.warn("policy rollout produced an empty trojan population",
                      EmptyHarvest)
    return records
