"""Stochastic policies, per-objective gradients, and the scalarized PPO update.

The policy is a diagonal Gaussian whose mean comes from a linear map or a
one-hidden-layer tanh network; all parameters live in a single flat vector
so per-objective policy gradients stack into an (m, d) matrix. Gradients
are computed analytically (closed-form backprop), which keeps them exactly
finite-difference-checkable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .momdp import MOMDPEnv, Trajectory, Transition
from .pareto import validate_weights

__all__ = [
    "GaussianPolicy",
    "RolloutBatch",
    "VectorCritic",
    "collect_batch",
    "estimate_gradient_set",
    "gae",
    "normalize_per_objective",
    "ppo_update",
    "run_episode",
]

_LOG_2PI = math.log(2.0 * math.pi)


class _MeanNet:
    """Flat-vector linear or one-hidden-layer tanh network with backprop."""

    def __init__(self, in_dim: int, out_dim: int, hidden: int):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.hidden = hidden
        if hidden > 0:
            self.num_params = hidden * in_dim + hidden + out_dim * hidden + out_dim
        else:
            self.num_params = out_dim * in_dim + out_dim

    def split(self, params: np.ndarray):
        if self.hidden > 0:
            h, s, a = self.hidden, self.in_dim, self.out_dim
            i = 0
            w1 = params[i : i + h * s].reshape(h, s); i += h * s
            b1 = params[i : i + h]; i += h
            w2 = params[i : i + a * h].reshape(a, h); i += a * h
            b2 = params[i : i + a]; i += a
            return w1, b1, w2, b2
        a, s = self.out_dim, self.in_dim
        return params[: a * s].reshape(a, s), params[a * s : a * s + a]

    def forward(self, params: np.ndarray, states: np.ndarray):
        """Return (outputs, cache-for-backprop) for a batch of states."""
        if self.hidden > 0:
            w1, b1, w2, b2 = self.split(params)
            hid = np.tanh(states @ w1.T + b1)
            return hid @ w2.T + b2, hid
        w, b = self.split(params)
        return states @ w.T + b, None

    def backprop(self, params: np.ndarray, states: np.ndarray, cache, d_out: np.ndarray):
        """Flat gradient of ``sum(d_out * outputs)`` w.r.t. the parameters."""
        grad = np.empty(self.num_params)
        if self.hidden > 0:
            _, _, w2, _ = self.split(params)
            hid = cache
            d_hid = (d_out @ w2) * (1.0 - hid * hid)
            h, s, a = self.hidden, self.in_dim, self.out_dim
            i = 0
            grad[i : i + h * s] = (d_hid.T @ states).ravel(); i += h * s
            grad[i : i + h] = d_hid.sum(axis=0); i += h
            grad[i : i + a * h] = (d_out.T @ hid).ravel(); i += a * h
            grad[i : i + a] = d_out.sum(axis=0)
            return grad
        a, s = self.out_dim, self.in_dim
        grad[: a * s] = (d_out.T @ states).ravel()
        grad[a * s :] = d_out.sum(axis=0)
        return grad


class GaussianPolicy:
    """Diagonal Gaussian over actions; mean from a small network.

    The flat parameter vector is [mean-network weights..., log_std], with
    one log standard deviation per action dimension, clamped into
    ``[log_std_min, log_std_max]`` when used.
    """

    def __init__(
        self,
        state_dim: int,
        action_dim: int,
        hidden: int = 32,
        log_std_min: float = -5.0,
        log_std_max: float = 2.0,
    ):
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.hidden = hidden
        self.log_std_min = log_std_min
        self.log_std_max = log_std_max
        self.net = _MeanNet(state_dim, action_dim, hidden)
        self.num_params = self.net.num_params + action_dim

    def init_params(self, rng: np.random.Generator, weight_scale: float = 0.1,
                    log_std_init: float = -0.5) -> np.ndarray:
        params = np.empty(self.num_params)
        params[: self.net.num_params] = weight_scale * rng.standard_normal(self.net.num_params)
        params[self.net.num_params :] = log_std_init
        return params

    def _net_params(self, params: np.ndarray) -> np.ndarray:
        return params[: self.net.num_params]

    def log_std(self, params: np.ndarray) -> np.ndarray:
        return np.clip(params[self.net.num_params :], self.log_std_min, self.log_std_max)

    def mean(self, params: np.ndarray, states: np.ndarray) -> np.ndarray:
        out, _ = self.net.forward(self._net_params(params), np.atleast_2d(states))
        return out

    def act(self, params: np.ndarray, state, rng: np.random.Generator | None = None,
            deterministic: bool = False) -> np.ndarray:
        """Sample an action (or return the mean in deterministic mode)."""
        state = np.asarray(state, dtype=float)
        mu = self.mean(params, state)[0]
        if deterministic:
            return mu
        if rng is None:
            raise ValueError("sampling mode requires an rng")
        std = np.exp(self.log_std(params))
        return mu + std * rng.standard_normal(self.action_dim)

    def log_prob(self, params: np.ndarray, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states, dtype=float))
        actions = np.atleast_2d(np.asarray(actions, dtype=float))
        mu, _ = self.net.forward(self._net_params(params), states)
        log_std = self.log_std(params)
        std = np.exp(log_std)
        zscores = (actions - mu) / std
        return -0.5 * np.sum(zscores * zscores, axis=1) - log_std.sum() \
            - 0.5 * self.action_dim * _LOG_2PI

    def weighted_score_sum(self, params: np.ndarray, states: np.ndarray,
                           actions: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
        """Flat gradient of ``sum_t coeffs[t] * log pi(actions[t] | states[t])``."""
        states = np.atleast_2d(np.asarray(states, dtype=float))
        actions = np.atleast_2d(np.asarray(actions, dtype=float))
        coeffs = np.asarray(coeffs, dtype=float)
        net_params = self._net_params(params)
        mu, cache = self.net.forward(net_params, states)
        raw = params[self.net.num_params :]
        log_std = np.clip(raw, self.log_std_min, self.log_std_max)
        inv_var = np.exp(-2.0 * log_std)
        residual = actions - mu
        d_mu = coeffs[:, None] * residual * inv_var
        grad = np.empty(self.num_params)
        grad[: self.net.num_params] = self.net.backprop(net_params, states, cache, d_mu)
        # d logp / d log_std_j = z_j^2 - 1; zero where the clamp is active.
        zsq = residual * residual * inv_var
        d_log_std = coeffs @ (zsq - 1.0)
        active = (raw > self.log_std_min) & (raw < self.log_std_max)
        grad[self.net.num_params :] = np.where(active, d_log_std, 0.0)
        return grad

    def log_prob_grad(self, params: np.ndarray, state, action) -> np.ndarray:
        """Gradient of ``log pi(action | state)`` w.r.t. all parameters."""
        return self.weighted_score_sum(
            params, np.asarray(state, dtype=float)[None, :],
            np.asarray(action, dtype=float)[None, :], np.ones(1)
        )


class VectorCritic:
    """State-value network with one output head per objective."""

    def __init__(self, state_dim: int, num_objectives: int, hidden: int = 32):
        self.state_dim = state_dim
        self.num_objectives = num_objectives
        self.hidden = hidden
        self.net = _MeanNet(state_dim, num_objectives, hidden)
        self.num_params = self.net.num_params

    def init_params(self, rng: np.random.Generator, weight_scale: float = 0.1) -> np.ndarray:
        return weight_scale * rng.standard_normal(self.num_params)

    def values(self, params: np.ndarray, states) -> np.ndarray:
        out, _ = self.net.forward(params, np.atleast_2d(np.asarray(states, dtype=float)))
        return out

    def mse_grad(self, params: np.ndarray, states: np.ndarray,
                 targets: np.ndarray) -> tuple[np.ndarray, float]:
        """Gradient and value of ``0.5 * mean((V(s) - target)^2)``."""
        states = np.atleast_2d(np.asarray(states, dtype=float))
        values, cache = self.net.forward(params, states)
        err = (values - targets) / values.size
        grad = self.net.backprop(params, states, cache, err)
        loss = 0.5 * float(np.sum((values - targets) ** 2)) / values.size
        return grad, loss


@dataclass
class RolloutBatch:
    """Trajectories plus the flattened per-step learning signals.

    ``actions`` are the raw sampled actions (before environment clamping);
    log-probabilities refer to them under the collecting policy snapshot.
    Advantages and return targets carry one component per objective.
    """

    trajectories: list[Trajectory]
    states: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray

    def __post_init__(self):
        n = self.states.shape[0]
        if n == 0:
            raise ValueError("empty rollout batch")
        for name in ("actions", "log_probs", "advantages", "returns"):
            if getattr(self, name).shape[0] != n:
                raise ValueError(f"batch field {name} disagrees in length")


def gae(trajectory: Trajectory, critic: VectorCritic, critic_params: np.ndarray,
        gamma: float, lam: float) -> np.ndarray:
    """Per-objective generalized advantage estimates, shape (T, m).

    Each objective is treated independently. Horizon-truncated episodes
    bootstrap from the critic at the final next state; terminal episodes
    bootstrap zero.
    """
    T = len(trajectory)
    rewards = trajectory.rewards_matrix()
    states = np.stack([t.state for t in trajectory.transitions])
    values = critic.values(critic_params, states)
    last = trajectory.transitions[-1]
    if last.terminal:
        tail = np.zeros(critic.num_objectives)
    else:
        tail = critic.values(critic_params, last.next_state[None, :])[0]
    next_values = np.vstack([values[1:], tail[None, :]])
    not_terminal = np.array(
        [0.0 if t.terminal else 1.0 for t in trajectory.transitions]
    )[:, None]
    deltas = rewards + gamma * next_values * not_terminal - values
    advantages = np.zeros_like(deltas)
    carry = np.zeros(critic.num_objectives)
    for t in range(T - 1, -1, -1):
        carry = deltas[t] + gamma * lam * not_terminal[t, 0] * carry
        advantages[t] = carry
    return advantages


def run_episode(env: MOMDPEnv, policy: GaussianPolicy, params: np.ndarray,
                rng: np.random.Generator | None = None,
                deterministic: bool = False, seed: int | None = None):
    """Roll one episode; returns (trajectory, raw_actions, states).

    The trajectory records the clamped actions the environment applied;
    ``raw_actions`` keeps the sampled actions the learner needs.
    """
    if seed is None:
        if rng is None:
            raise ValueError("need a seed or an rng to reset the environment")
        seed = int(rng.integers(0, 2**31 - 1))
    state = env.reset(seed)
    transitions = []
    raw_actions = []
    states = []
    for _ in range(env.spec.horizon):
        action = policy.act(params, state, rng=rng, deterministic=deterministic)
        next_state, reward, terminal = env.step(state, action)
        transitions.append(
            Transition(
                state=state,
                action=env.clamp(action),
                reward=reward,
                next_state=next_state,
                terminal=terminal,
            )
        )
        raw_actions.append(action)
        states.append(state)
        state = next_state
        if terminal:
            break
    return Trajectory(transitions), np.stack(raw_actions), np.stack(states)


def collect_batch(env: MOMDPEnv, policy: GaussianPolicy, params: np.ndarray,
                  critic: VectorCritic, critic_params: np.ndarray,
                  episodes: int, gamma: float, lam: float,
                  rng: np.random.Generator) -> RolloutBatch:
    """Collect ``episodes`` episodes under one policy snapshot."""
    if episodes < 1:
        raise ValueError("need at least one episode per batch")
    trajectories = []
    all_states, all_actions, all_adv, all_ret = [], [], [], []
    for _ in range(episodes):
        traj, raw_actions, states = run_episode(env, policy, params, rng=rng)
        adv = gae(traj, critic, critic_params, gamma, lam)
        values = critic.values(critic_params, states)
        trajectories.append(traj)
        all_states.append(states)
        all_actions.append(raw_actions)
        all_adv.append(adv)
        all_ret.append(adv + values)
    states = np.concatenate(all_states)
    actions = np.concatenate(all_actions)
    return RolloutBatch(
        trajectories=trajectories,
        states=states,
        actions=actions,
        log_probs=policy.log_prob(params, states, actions),
        advantages=np.concatenate(all_adv),
        returns=np.concatenate(all_ret),
    )


def normalize_per_objective(advantages: np.ndarray) -> np.ndarray:
    """Zero-mean unit-variance per objective; constant columns stay centered."""
    mean = advantages.mean(axis=0)
    std = advantages.std(axis=0)
    std = np.where(std < 1e-8, 1.0, std)
    return (advantages - mean) / std


def estimate_gradient_set(policy: GaussianPolicy, params: np.ndarray,
                          batch: RolloutBatch,
                          normalize_advantages: bool = False) -> np.ndarray:
    """Per-objective policy-gradient estimates, one (d,) row per objective.

    Row i is the batch average of ``advantage_i * grad log pi``, i.e. the
    gradient of objective i's surrogate at the collecting snapshot (where
    all likelihood ratios equal one).
    """
    adv = batch.advantages
    if normalize_advantages:
        adv = normalize_per_objective(adv)
    n, m = adv.shape
    rows = [
        policy.weighted_score_sum(params, batch.states, batch.actions, adv[:, i] / n)
        for i in range(m)
    ]
    G = np.stack(rows)
    if not np.all(np.isfinite(G)):
        raise ValueError("gradient estimate has non-finite entries")
    return G


class _Adam:
    def __init__(self, dim: int, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(dim)
        self.v = np.zeros(dim)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        """One descent step along ``grad``."""
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class _SGD:
    """Plain gradient steps; preserves the magnitude of the update signal.

    Unlike Adam this lets policies whose common ascent direction has nearly
    vanished take nearly-zero steps, which matters when comparing targeted
    fine-tuning against undirected drift.
    """

    def __init__(self, dim: int, lr: float):
        self.lr = lr

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        return params - self.lr * grad


_OPTIMIZERS = {"adam": _Adam, "sgd": _SGD}


def ppo_update(policy: GaussianPolicy, params: np.ndarray,
               critic: VectorCritic, critic_params: np.ndarray,
               batch: RolloutBatch, omega, clip_eps: float = 0.2,
               epochs: int = 4, lr: float = 3e-3,
               normalize_advantages: bool = True,
               optimizer: str = "adam") -> tuple[np.ndarray, np.ndarray]:
    """Clipped-surrogate ascent on the ``omega``-scalarized advantages.

    Advantages are (optionally) normalized per objective, then collapsed
    with the simplex weights ``omega``; by linearity this ascends the same
    direction as the omega-weighted combination of per-objective
    surrogates. The critic regresses its per-objective return targets with
    the same optimizer settings. Returns the updated (params, critic_params)
    snapshots; inputs are not mutated.
    """
    omega = validate_weights(omega, tol=1e-6)
    if omega.size != batch.advantages.shape[1]:
        raise ValueError(
            f"omega has {omega.size} components, batch has {batch.advantages.shape[1]} objectives"
        )
    adv = batch.advantages
    if normalize_advantages:
        adv = normalize_per_objective(adv)
    scalar_adv = adv @ omega
    n = scalar_adv.shape[0]

    try:
        make_opt = _OPTIMIZERS[optimizer]
    except KeyError:
        raise ValueError(f"unknown optimizer {optimizer!r}, expected one of {sorted(_OPTIMIZERS)}") from None
    params = params.copy()
    critic_params = critic_params.copy()
    policy_opt = make_opt(params.size, lr)
    # The critic is plain regression; Adam keeps it robust under either choice.
    critic_opt = _Adam(critic_params.size, lr if optimizer == "adam" else min(lr, 5e-3))
    for _ in range(epochs):
        log_probs = policy.log_prob(params, batch.states, batch.actions)
        ratio = np.exp(log_probs - batch.log_probs)
        # Gradient flows only where the unclipped branch is the active min.
        active = np.where(scalar_adv >= 0.0, ratio <= 1.0 + clip_eps, ratio >= 1.0 - clip_eps)
        coeffs = np.where(active, ratio * scalar_adv, 0.0) / n
        surrogate_grad = policy.weighted_score_sum(params, batch.states, batch.actions, coeffs)
        params = policy_opt.step(params, -surrogate_grad)
        value_grad, _ = critic.mse_grad(critic_params, batch.states, batch.returns)
        critic_params = critic_opt.step(critic_params, value_grad)
    return params, critic_params
