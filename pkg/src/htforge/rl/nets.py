"""Policy/value network for the PPO agent, implemented directly on numpy.

The network is a tanh MLP trunk with one linear softmax head per action
component and a scalar value head.  Action spaces are factored: a
multi-discrete space has one head of the stated arity per component, a
multi-binary space is the special case where every head has arity two.

Everything here is deterministic given the caller's Generator, and all
arithmetic is float64.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeMismatch


@dataclass(frozen=True)
class ActionSpace:
    """Factored discrete action space; heads[i] is the arity of component i."""

    kind: str
    heads: tuple[int, ...]

    def __post_init__(self):
        if self.kind not in ("multidiscrete", "multibinary"):
            raise ShapeMismatch(f"unknown action space kind {self.kind!r}")
        if not self.heads or any(int(k) < 2 for k in self.heads):
            raise ShapeMismatch("every action component needs arity >= 2")

    @property
    def n_components(self) -> int:
        return len(self.heads)

    def contains(self, action) -> bool:
        arr = np.asarray(action)
        if arr.shape != (len(self.heads),):
            return False
        return all(0 <= int(a) < k for a, k in zip(arr, self.heads))


def multi_discrete(nvec) -> ActionSpace:
    return ActionSpace("multidiscrete", tuple(int(k) for k in nvec))


def multi_binary(n: int) -> ActionSpace:
    return ActionSpace("multibinary", (2,) * int(n))


@dataclass
class PolicyParams:
    obs_dim: int
    space: ActionSpace
    hidden: tuple[int, int]
    arrays: dict[str, np.ndarray] = field(repr=False)

    def names(self):
        """Parameter keys in a stable order (optimizer state relies on it)."""
        out = ["w0", "b0", "w1", "b1"]
        for i in range(self.space.n_components):
            out += [f"h{i}w", f"h{i}b"]
        out += ["vw", "vb"]
        return out

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.obs_dim, self.space, self.hidden,
                            {k: v.copy() for k, v in self.arrays.items()})


def _orthogonal(rng: np.random.Generator, rows: int, cols: int, gain: float):
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return np.ascontiguousarray(gain * q[:rows, :cols])


def init_params(obs_dim: int, space: ActionSpace, hidden=(64, 64),
                seed: int = 0) -> PolicyParams:
    """Orthogonal trunk (gain sqrt(2)), small policy heads (0.01), value 1.0."""
    rng = np.random.default_rng(seed)
    h0, h1 = int(hidden[0]), int(hidden[1])
    arrays = {
        "w0": _orthogonal(rng, obs_dim, h0, np.sqrt(2.0)),
        "b0": np.zeros(h0),
        "w1": _orthogonal(rng, h0, h1, np.sqrt(2.0)),
        "b1": np.zeros(h1),
    }
    for i, k in enumerate(space.heads):
        arrays[f"h{i}w"] = _orthogonal(rng, h1, int(k), 0.01)
        arrays[f"h{i}b"] = np.zeros(int(k))
    arrays["vw"] = _orthogonal(rng, h1, 1, 1.0)
    arrays["vb"] = np.zeros(1)
    return PolicyParams(int(obs_dim), space, (h0, h1), arrays)


def forward(params: PolicyParams, obs):
    """Batched forward pass.

    obs: (B, obs_dim).  Returns (logits list per head, values (B,), cache)
    where cache holds the activations needed for the backward pass.
    """
    obs = np.asarray(obs, dtype=np.float64)
    if obs.ndim != 2 or obs.shape[1] != params.obs_dim:
        raise ShapeMismatch(
            f"expected obs of shape (B, {params.obs_dim}), got {obs.shape}")
    a = params.arrays
    h1 = np.tanh(obs @ a["w0"] + a["b0"])
    h2 = np.tanh(h1 @ a["w1"] + a["b1"])
    logits = [h2 @ a[f"h{i}w"] + a[f"h{i}b"]
              for i in range(params.space.n_components)]
    values = (h2 @ a["vw"] + a["vb"]).ravel()
    return logits, values, (obs, h1, h2)


def log_softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def evaluate_actions(params: PolicyParams, obs, actions):
    """Log-prob, entropy and value for given (B, n_components) actions."""
    logits, values, cache = forward(params, obs)
    actions = np.asarray(actions, dtype=np.int64)
    b = actions.shape[0]
    rows = np.arange(b)
    logp = np.zeros(b)
    entropy = np.zeros(b)
    probs = []
    for h, z in enumerate(logits):
        ls = log_softmax(z)
        p = np.exp(ls)
        probs.append(p)
        logp += ls[rows, actions[:, h]]
        entropy += -(p * ls).sum(axis=1)
    return logp, entropy, values, logits, probs, cache


def sample_actions(params: PolicyParams, obs, rng: np.random.Generator):
    """Sample one action row per observation; also returns logp and value."""
    logits, values, _ = forward(params, obs)
    b = logits[0].shape[0]
    rows = np.arange(b)
    actions = np.empty((b, params.space.n_components), dtype=np.int64)
    logp = np.zeros(b)
    for h, z in enumerate(logits):
        ls = log_softmax(z)
        cum = np.cumsum(np.exp(ls), axis=1)
        u = rng.random((b, 1))
        pick = np.minimum((cum < u).sum(axis=1), z.shape[1] - 1)
        actions[:, h] = pick
        logp += ls[rows, pick]
    return actions, logp, values


def greedy_actions(params: PolicyParams, obs):
    logits, _, _ = forward(params, obs)
    return np.stack([z.argmax(axis=1) for z in logits], axis=1)


def backward(params: PolicyParams, cache, dlogits, dvalues):
    """Gradients of a scalar loss given d(loss)/d(logits) and d(loss)/d(values)."""
    obs, h1, h2 = cache
    a = params.arrays
    grads = {}
    dh2 = dvalues[:, None] @ a["vw"].T
    grads["vw"] = h2.T @ dvalues[:, None]
    grads["vb"] = np.array([dvalues.sum()])
    for i, dz in enumerate(dlogits):
        grads[f"h{i}w"] = h2.T @ dz
        grads[f"h{i}b"] = dz.sum(axis=0)
        dh2 += dz @ a[f"h{i}w"].T
    dpre2 = dh2 * (1.0 - h2 * h2)
    grads["w1"] = h1.T @ dpre2
    grads["b1"] = dpre2.sum(axis=0)
    dh1 = dpre2 @ a["w1"].T
    dpre1 = dh1 * (1.0 - h1 * h1)
    grads["w0"] = obs.T @ dpre1
    grads["b0"] = dpre1.sum(axis=0)
    return grads


def clip_grad_norm(grads: dict, max_norm: float) -> float:
    """Scale gradients in place to a global L2 norm cap; returns the raw norm."""
    total = 0.0
    for g in grads.values():
        total += float((g * g).sum())
    norm = float(np.sqrt(total))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for g in grads.values():
            g *= scale
    return norm


class Adam:
    """Adam with bias correction over a PolicyParams arrays dict."""

    def __init__(self, params: PolicyParams, lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.arrays.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.arrays.items()}

    def step(self, params: PolicyParams, grads: dict):
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            m = self.m[k]
            v = self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            params.arrays[k] -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def space_to_json(space: ActionSpace) -> str:
    return json.dumps({"kind": space.kind, "heads": list(space.heads)})


def space_from_json(text: str) -> ActionSpace:
    obj = json.loads(text)
    return ActionSpace(obj["kind"], tuple(int(k) for k in obj["heads"]))
