"""Small dense networks with hand-rolled backprop.

Everything the trainer needs numerically: a tanh MLP (tanh keeps the loss
smooth, which the finite-difference gradient audit relies on), a masked
categorical head, and Adam. Parameters flatten to a single float vector in
a fixed order (per layer: W row-major, then b; actor layers before critic
layers) so policies serialize as one array.
"""

from __future__ import annotations

import numpy as np

MASK_NEG = -1e9  # additive logit for invalid actions; keeps exp() finite


def _orthogonal(rng: np.random.Generator, n_in: int, n_out: int, gain: float) -> np.ndarray:
    a = rng.normal(size=(max(n_in, n_out), min(n_in, n_out)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))  # fix the sign ambiguity for determinism
    if n_in < n_out:
        q = q.T
    return gain * q[:n_in, :n_out]


def mlp_init(sizes: list[int], rng: np.random.Generator,
             out_gain: float = 1.0) -> list[tuple[np.ndarray, np.ndarray]]:
    """Orthogonal layers as (W, b) pairs, float64; hidden gain sqrt(2), the
    output layer scaled by out_gain (small for policy heads so the initial
    action distribution is near uniform)."""
    layers = []
    last = len(sizes) - 2
    for idx, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        gain = out_gain if idx == last else np.sqrt(2.0)
        W = _orthogonal(rng, n_in, n_out, gain)
        b = np.zeros(n_out)
        layers.append((W, b))
    return layers


def mlp_forward(layers, x: np.ndarray):
    """Forward pass with tanh hidden activations and a linear head.

    Returns (output, cache) where cache holds per-layer inputs and
    pre-activations for the backward pass. x is (B, n_in).
    """
    cache = []
    h = x
    last = len(layers) - 1
    for idx, (W, b) in enumerate(layers):
        z = h @ W + b
        a = z if idx == last else np.tanh(z)
        cache.append((h, z, a))
        h = a
    return h, cache


def mlp_backward(layers, cache, dout: np.ndarray):
    """Gradient of a scalar loss w.r.t. every layer, given dL/d(output)."""
    grads = [None] * len(layers)
    last = len(layers) - 1
    delta = dout
    for idx in range(last, -1, -1):
        h_in, z, _ = cache[idx]
        if idx != last:
            delta = delta * (1.0 - np.tanh(z) ** 2)
        grads[idx] = (h_in.T @ delta, delta.sum(axis=0))
        if idx > 0:
            W, _ = layers[idx]
            delta = delta @ W.T
    return grads


def flatten_params(layer_groups) -> np.ndarray:
    parts = []
    for layers in layer_groups:
        for W, b in layers:
            parts.append(W.ravel())
            parts.append(b.ravel())
    return np.concatenate(parts)


def unflatten_params(flat: np.ndarray, shapes: list[list[tuple[int, int]]]):
    """Inverse of flatten_params for layer groups with the given (n_in, n_out) shapes."""
    groups = []
    pos = 0
    for group_shapes in shapes:
        layers = []
        for n_in, n_out in group_shapes:
            W = flat[pos : pos + n_in * n_out].reshape(n_in, n_out)
            pos += n_in * n_out
            b = flat[pos : pos + n_out]
            pos += n_out
            layers.append((W.copy(), b.copy()))
        groups.append(layers)
    if pos != flat.size:
        raise ValueError(f"parameter blob length {flat.size} does not match declared shape ({pos})")
    return groups


def masked_log_softmax(logits: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Row-wise log-softmax restricted to valid entries.

    Invalid entries get a log-probability of about MASK_NEG; adding any
    constant to all logits leaves the result unchanged.
    """
    masked = np.where(valid, logits, MASK_NEG)
    shifted = masked - masked.max(axis=-1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    return shifted - logz


def sample_categorical(log_probs: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw from one log-probability row."""
    probs = np.exp(log_probs)
    probs = probs / probs.sum()
    u = rng.random()
    return int(np.searchsorted(np.cumsum(probs), u, side="right").clip(0, probs.size - 1))


class ActorCritic:
    """Pair-scoring actor plus a flat-observation critic.

    The actor is one two-hidden-layer tanh MLP applied to every
    (patient, hospital) pair's features (and to the zeroed "wait" pair),
    so the same scorer serves all slots and the policy is equivariant to
    roster position. The critic is a plain MLP over the full observation.
    """

    def __init__(self, caps: tuple[int, int], hidden: int, rng: np.random.Generator):
        from .encoding import PAIR_DIM, obs_length, pair_features

        self._pair_features = pair_features
        self.caps = tuple(caps)
        self.hidden = hidden
        self.obs_dim = obs_length(*caps)
        self.n_actions = caps[0] * caps[1] + 1
        self.actor = mlp_init([PAIR_DIM, hidden, hidden, 1], rng, out_gain=0.01)
        self.critic = mlp_init([self.obs_dim, hidden, hidden, 1], rng, out_gain=1.0)

    def shapes(self) -> list[list[tuple[int, int]]]:
        return [
            [(W.shape[0], W.shape[1]) for W, _ in self.actor],
            [(W.shape[0], W.shape[1]) for W, _ in self.critic],
        ]

    @property
    def n_params(self) -> int:
        return flatten_params([self.actor, self.critic]).size

    def get_params(self) -> np.ndarray:
        return flatten_params([self.actor, self.critic])

    def set_params(self, flat: np.ndarray) -> None:
        self.actor, self.critic = unflatten_params(np.asarray(flat, dtype=np.float64), self.shapes())

    def logits_with_cache(self, obs: np.ndarray):
        B = obs.shape[0]
        pairs = self._pair_features(obs, self.caps)
        flat = pairs.reshape(B * self.n_actions, pairs.shape[-1])
        out, cache = mlp_forward(self.actor, flat)
        return out.reshape(B, self.n_actions), cache

    def logits_backward(self, cache, d_logits: np.ndarray):
        return mlp_backward(self.actor, cache, d_logits.reshape(-1, 1))

    def policy_logits(self, obs: np.ndarray) -> np.ndarray:
        return self.logits_with_cache(obs)[0]

    def values_with_cache(self, obs: np.ndarray):
        out, cache = mlp_forward(self.critic, obs)
        return out[:, 0], cache

    def values_backward(self, cache, dv: np.ndarray):
        return mlp_backward(self.critic, cache, dv[:, None])

    def values(self, obs: np.ndarray) -> np.ndarray:
        return self.values_with_cache(obs)[0]

    def step(self, obs_row: np.ndarray, valid_row: np.ndarray, rng: np.random.Generator,
             deterministic: bool = False) -> tuple[int, float, float]:
        """Single-state action selection: (action index, log_prob, value)."""
        obs = obs_row[None, :]
        logits = self.policy_logits(obs)
        logp = masked_log_softmax(logits, valid_row[None, :])[0]
        if deterministic:
            action = int(np.argmax(np.where(valid_row, logp, -np.inf)))
        else:
            action = sample_categorical(logp, rng)
        value = self.values(obs)
        return action, float(logp[action]), float(value[0])


class Adam:
    def __init__(self, n_params: int, lr: float = 3e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0

    def update(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
