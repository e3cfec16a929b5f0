"""Clipped-surrogate policy-gradient training over generated incidents.

One actor-critic pair, rollouts collected from a pool of lockstep
environments, generalized advantage estimation, and minibatched Adam
updates on the clipped objective with a value term and entropy bonus.
The gradient is assembled analytically (see ppo_loss_and_grad); a
finite-difference audit in the test suite holds it to 1e-4 relative
error. Fully deterministic for a given seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..engine import assign_patient, init_session, step
from ..generate import GeneratorConfig, generate_scenario
from ..reward import transition_reward
from .encoding import ObsNorm, action_from_flat, encode, flat_valid_actions, obs_length
from .nets import ActorCritic, Adam, masked_log_softmax


@dataclass(frozen=True)
class PPOConfig:
    clip: float = 0.2
    # near-undiscounted: with 1-minute ticks a 0.99 discount halves rewards
    # ~70 ticks out and suppresses dispatch to far (slow-paying) hospitals
    gamma: float = 0.999
    gae_lambda: float = 0.95
    epochs: int = 4
    minibatch: int = 256
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    learning_rate: float = 3e-4
    rollout_steps: int = 128  # per environment, per iteration
    n_envs: int = 16
    max_env_steps: int = 200_000
    hidden: int = 128
    reward_scale: float = 0.01
    max_grad_norm: float = 0.5
    anneal: bool = True  # linear decay of learning rate and entropy bonus
    scenario_seed_base: int = 0


class TrainingDiverged(RuntimeError):
    pass


class MciEnv:
    """Single-incident episode with the flattened assign-or-wait action space."""

    def __init__(self, config: GeneratorConfig, caps: tuple[int, int],
                 norm: ObsNorm = ObsNorm(), reward_scale: float = 1.0):
        self.config = config
        self.caps = caps
        self.norm = norm
        self.reward_scale = reward_scale
        self.state = None
        self.episode_return = 0.0  # unscaled
        self.episode_steps = 0

    def reset(self, scenario_seed: int):
        scenario = generate_scenario(replace(self.config, seed=scenario_seed))
        self.state, _ = init_session(scenario)
        self.episode_return = 0.0
        self.episode_steps = 0
        return encode(self.state, self.caps, self.norm)

    def step_env(self, flat_action: int):
        events = []
        pair = action_from_flat(flat_action, self.caps)
        if pair is not None:
            i, j = pair
            patient_id = self.state.scenario.patients[i].id
            hospital_id = self.state.scenario.hospitals[j].id
            _, ev = assign_patient(self.state, patient_id, hospital_id, source="Policy")
            events.extend(ev)
        _, ev = step(self.state, 1)
        events.extend(ev)
        raw = transition_reward(None, self.state, events).total
        self.episode_return += raw
        self.episode_steps += 1
        done = self.state.terminal
        obs, mask = encode(self.state, self.caps, self.norm)
        return obs, mask, raw * self.reward_scale, done


def compute_gae(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray,
                last_values: np.ndarray, gamma: float, lam: float):
    """Time-major GAE over (T, E) arrays; returns (advantages, returns)."""
    T, E = rewards.shape
    adv = np.zeros((T, E))
    next_adv = np.zeros(E)
    next_values = last_values
    for t in range(T - 1, -1, -1):
        not_done = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_values * not_done - values[t]
        next_adv = delta + gamma * lam * not_done * next_adv
        adv[t] = next_adv
        next_values = values[t]
    return adv, adv + values


def ppo_loss_and_grad(
    ac: ActorCritic,
    obs: np.ndarray,
    valid: np.ndarray,
    actions: np.ndarray,
    old_logp: np.ndarray,
    advantages: np.ndarray,
    returns: np.ndarray,
    clip: float = 0.2,
    value_coef: float = 0.5,
    entropy_coef: float = 0.01,
):
    """Full PPO objective and its analytic gradient, flat over all parameters.

    loss = -E[min(r A, clip(r) A)] + value_coef * E[(v - ret)^2]
           - entropy_coef * E[H(pi)]
    """
    B = obs.shape[0]

    logits, actor_cache = ac.logits_with_cache(obs)
    logp_all = masked_log_softmax(logits, valid)
    probs = np.exp(logp_all)
    rows = np.arange(B)
    logp_a = logp_all[rows, actions]

    ratio = np.exp(logp_a - old_logp)
    clipped = np.clip(ratio, 1.0 - clip, 1.0 + clip)
    s1 = ratio * advantages
    s2 = clipped * advantages
    policy_loss = -np.minimum(s1, s2).mean()

    entropy_rows = -np.sum(probs * logp_all, axis=1)
    entropy = entropy_rows.mean()

    v, critic_cache = ac.values_with_cache(obs)
    value_err = v - returns
    value_loss = np.mean(value_err**2)

    loss = policy_loss + value_coef * value_loss - entropy_coef * entropy

    # d(policy_loss)/d(logp_a): the min() picks the unclipped branch when
    # s1 <= s2; inside the clip interval both branches share the same slope.
    use_s1 = s1 <= s2
    in_clip = (ratio > 1.0 - clip) & (ratio < 1.0 + clip)
    dmin_dratio = np.where(use_s1, advantages, advantages * in_clip)
    dloss_dlogp_a = -(dmin_dratio * ratio) / B

    one_hot = np.zeros_like(logp_all)
    one_hot[rows, actions] = 1.0
    d_logits = dloss_dlogp_a[:, None] * (one_hot - probs)
    # entropy bonus: dH/dz = -p (logp + H), zero on masked columns
    d_entropy = -probs * (logp_all + entropy_rows[:, None])
    d_logits -= (entropy_coef / B) * d_entropy
    d_logits *= valid  # masked logits are constants

    actor_grads = ac.logits_backward(actor_cache, d_logits)
    dv = (value_coef * 2.0 / B) * value_err
    critic_grads = ac.values_backward(critic_cache, dv)

    flat = np.concatenate(
        [np.concatenate([g[0].ravel(), g[1].ravel()]) for g in actor_grads]
        + [np.concatenate([g[0].ravel(), g[1].ravel()]) for g in critic_grads]
    )
    stats = {
        "policy_loss": float(policy_loss),
        "value_loss": float(value_loss),
        "entropy": float(entropy),
    }
    return float(loss), flat, stats


@dataclass
class TrainResult:
    params: np.ndarray
    curve: list[tuple[int, int, float]] = field(default_factory=list)  # (iteration, steps, mean_ep_reward)


def train_ppo(
    env_config: GeneratorConfig,
    ppo: PPOConfig,
    seed: int = 0,
    norm: ObsNorm = ObsNorm(),
) -> TrainResult:
    """Run the training loop; returns final parameters and the reward curve.

    Episode scenario seeds advance deterministically from
    ppo.scenario_seed_base, so two runs with the same arguments produce
    identical curves and parameters.
    """
    caps = (env_config.patient_count, env_config.hospital_count)
    obs_dim = obs_length(*caps)
    n_actions = caps[0] * caps[1] + 1

    rng = np.random.default_rng(np.random.PCG64(seed))
    ac = ActorCritic(caps, ppo.hidden, rng)
    adam = Adam(ac.n_params, lr=ppo.learning_rate)

    envs = [MciEnv(env_config, caps, norm, ppo.reward_scale) for _ in range(ppo.n_envs)]
    next_scenario_seed = ppo.scenario_seed_base
    obs_now = np.zeros((ppo.n_envs, obs_dim))
    valid_now = np.zeros((ppo.n_envs, n_actions), dtype=bool)
    for e, env in enumerate(envs):
        o, m = env.reset(next_scenario_seed)
        next_scenario_seed += 1
        obs_now[e] = o
        valid_now[e] = flat_valid_actions(m)

    steps_done = 0
    iteration = 0
    curve: list[tuple[int, int, float]] = []
    last_mean = 0.0

    while steps_done < ppo.max_env_steps:
        T = ppo.rollout_steps
        E = ppo.n_envs
        obs_buf = np.zeros((T, E, obs_dim))
        valid_buf = np.zeros((T, E, n_actions), dtype=bool)
        act_buf = np.zeros((T, E), dtype=np.int64)
        logp_buf = np.zeros((T, E))
        rew_buf = np.zeros((T, E))
        val_buf = np.zeros((T, E))
        done_buf = np.zeros((T, E))
        finished_returns: list[float] = []

        for t in range(T):
            logits = ac.policy_logits(obs_now)
            logp_all = masked_log_softmax(logits, valid_now)
            values = ac.values(obs_now)
            probs = np.exp(logp_all)
            probs /= probs.sum(axis=1, keepdims=True)
            cum = np.cumsum(probs, axis=1)
            draws = rng.random(E)
            actions = np.minimum(
                (cum < draws[:, None]).sum(axis=1), n_actions - 1
            ).astype(np.int64)

            obs_buf[t] = obs_now
            valid_buf[t] = valid_now
            act_buf[t] = actions
            logp_buf[t] = logp_all[np.arange(E), actions]
            val_buf[t] = values

            for e, env in enumerate(envs):
                o, m, r, done = env.step_env(int(actions[e]))
                rew_buf[t, e] = r
                done_buf[t, e] = float(done)
                if done:
                    finished_returns.append(env.episode_return)
                    o, m = env.reset(next_scenario_seed)
                    next_scenario_seed += 1
                obs_now[e] = o
                valid_now[e] = flat_valid_actions(m)
            steps_done += E

        last_values = ac.values(obs_now)
        adv, rets = compute_gae(rew_buf, val_buf, done_buf, last_values,
                                ppo.gamma, ppo.gae_lambda)

        flat_obs = obs_buf.reshape(T * E, obs_dim)
        flat_valid = valid_buf.reshape(T * E, n_actions)
        flat_act = act_buf.reshape(T * E)
        flat_logp = logp_buf.reshape(T * E)
        flat_adv = adv.reshape(T * E)
        flat_ret = rets.reshape(T * E)
        flat_adv = (flat_adv - flat_adv.mean()) / (flat_adv.std() + 1e-8)

        # linear schedules stabilize the endgame: smaller steps, sharper policy
        progress = min(1.0, steps_done / ppo.max_env_steps) if ppo.anneal else 0.0
        adam.lr = ppo.learning_rate * (1.0 - 0.9 * progress)
        entropy_coef = ppo.entropy_coef * (1.0 - 0.8 * progress)

        n_samples = T * E
        params = ac.get_params()
        for _ in range(ppo.epochs):
            order = rng.permutation(n_samples)
            for start in range(0, n_samples, ppo.minibatch):
                idx = order[start : start + ppo.minibatch]
                loss, grad, _ = ppo_loss_and_grad(
                    ac, flat_obs[idx], flat_valid[idx], flat_act[idx],
                    flat_logp[idx], flat_adv[idx], flat_ret[idx],
                    clip=ppo.clip, value_coef=ppo.value_coef,
                    entropy_coef=entropy_coef,
                )
                if not math.isfinite(loss):
                    raise TrainingDiverged(f"non-finite loss at iteration {iteration}")
                gnorm = np.linalg.norm(grad)
                if gnorm > ppo.max_grad_norm:
                    grad = grad * (ppo.max_grad_norm / gnorm)
                params = adam.update(params, grad)
                ac.set_params(params)

        iteration += 1
        if finished_returns:
            last_mean = float(np.mean(finished_returns))
        if not math.isfinite(last_mean):
            raise TrainingDiverged(f"non-finite mean episode reward at iteration {iteration}")
        curve.append((iteration, steps_done, last_mean))

    return TrainResult(params=ac.get_params(), curve=curve)


def curve_to_csv(curve: list[tuple[int, int, float]]) -> str:
    lines = ["iteration,steps,mean_reward"]
    lines += [f"{it},{steps},{reward}" for it, steps, reward in curve]
    return "\n".join(lines) + "\n"
