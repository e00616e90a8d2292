"""Vector-reward decision processes and the built-in desk-scale environments.

Environments here are pure: ``reset(seed)`` returns the initial state and
``step(state, action)`` returns ``(next_state, reward, terminal)`` without
touching shared mutable state, so instances can be driven from any number
of workers. Rewards are always vectors with exactly ``num_objectives``
components. Horizon enforcement is the rollout driver's job.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MOMDPSpec",
    "MoPoint",
    "MoQuadratic",
    "Trajectory",
    "Transition",
    "make_env",
    "mo_return",
]


@dataclass(frozen=True)
class MOMDPSpec:
    """Static description of a vector-reward control problem."""

    state_dim: int
    action_dim: int
    num_objectives: int
    horizon: int
    gamma: float
    action_low: np.ndarray
    action_high: np.ndarray

    def __post_init__(self):
        if self.state_dim < 1 or self.action_dim < 1:
            raise ValueError("state_dim and action_dim must be positive")
        if self.num_objectives < 2:
            raise ValueError(f"need at least 2 objectives, got {self.num_objectives}")
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")
        low = np.asarray(self.action_low, dtype=float)
        high = np.asarray(self.action_high, dtype=float)
        if low.shape != (self.action_dim,) or high.shape != (self.action_dim,):
            raise ValueError("action bounds must have shape (action_dim,)")
        if np.any(low >= high):
            raise ValueError("action_low must be strictly below action_high")
        object.__setattr__(self, "action_low", low)
        object.__setattr__(self, "action_high", high)


@dataclass(frozen=True)
class Transition:
    """One environment step; ``action`` is the clamped action the env applied."""

    state: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    next_state: np.ndarray
    terminal: bool


@dataclass
class Trajectory:
    """Ordered transitions from a single episode."""

    transitions: list[Transition] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.transitions)

    def rewards_matrix(self) -> np.ndarray:
        return np.stack([t.reward for t in self.transitions])

    def validate(self, spec: MOMDPSpec | None = None) -> None:
        """Assert chaining and terminal-placement invariants (tests, audits)."""
        for prev, nxt in zip(self.transitions, self.transitions[1:]):
            if prev.terminal:
                raise ValueError("a transition follows a terminal one")
            if not np.array_equal(prev.next_state, nxt.state):
                raise ValueError("consecutive transitions do not chain")
        if spec is not None:
            if len(self) > spec.horizon:
                raise ValueError(f"trajectory length {len(self)} exceeds horizon {spec.horizon}")
            for t in self.transitions:
                if t.reward.shape != (spec.num_objectives,):
                    raise ValueError("reward vector has wrong number of components")


def mo_return(trajectory: Trajectory, gamma: float) -> np.ndarray:
    """Per-objective discounted reward sum along the trajectory."""
    if len(trajectory) == 0:
        raise ValueError("cannot compute the return of an empty trajectory")
    rewards = trajectory.rewards_matrix()
    discounts = gamma ** np.arange(len(trajectory))
    return discounts @ rewards


class MOMDPEnv:
    """Base class for the built-in environments."""

    spec: MOMDPSpec

    def clamp(self, action) -> np.ndarray:
        """Clip an action into the spec's bounds, rejecting non-finite input."""
        action = np.asarray(action, dtype=float)
        if action.shape != (self.spec.action_dim,):
            raise ValueError(
                f"action must have shape ({self.spec.action_dim},), got {action.shape}"
            )
        if not np.all(np.isfinite(action)):
            raise ValueError(f"non-finite action rejected: {action!r}")
        return np.clip(action, self.spec.action_low, self.spec.action_high)

    def reset(self, seed: int) -> np.ndarray:
        raise NotImplementedError

    def step(self, state, action) -> tuple[np.ndarray, np.ndarray, bool]:
        raise NotImplementedError


class MoPoint(MOMDPEnv):
    """Planar point mass trading forward speed against actuation energy.

    State is ``[x, y, vx, vy]``; the action is a 2-D acceleration command.
    Dynamics are a damped double integrator:

        v' = damping * v + dt * a        x' = x + dt * v'

    Rewards per step (the alive bonus is granted on every step; episodes
    end only at the horizon):

        speed  = vx' + r_alive
        energy = -sum(a_i^2) + r_alive + shift

    where ``shift`` moves the energy reward into the positive range. The
    initial state draws the position uniformly from
    ``[-init_noise, init_noise]^2``; the velocity always starts at zero, so
    two seeds differ only in the position components.
    """

    def __init__(
        self,
        horizon: int = 64,
        gamma: float = 0.99,
        dt: float = 0.1,
        damping: float = 0.95,
        r_alive: float = 1.0,
        shift: float = 2.0,
        init_noise: float = 0.1,
        action_bound: float = 1.0,
    ):
        self.dt = float(dt)
        self.damping = float(damping)
        self.r_alive = float(r_alive)
        self.shift = float(shift)
        self.init_noise = float(init_noise)
        self.spec = MOMDPSpec(
            state_dim=4,
            action_dim=2,
            num_objectives=2,
            horizon=horizon,
            gamma=gamma,
            action_low=np.full(2, -abs(action_bound)),
            action_high=np.full(2, abs(action_bound)),
        )

    def reset(self, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        position = rng.uniform(-self.init_noise, self.init_noise, size=2)
        return np.concatenate([position, np.zeros(2)])

    def step(self, state, action):
        state = np.asarray(state, dtype=float)
        a = self.clamp(action)
        velocity = self.damping * state[2:] + self.dt * a
        position = state[:2] + self.dt * velocity
        speed = velocity[0] + self.r_alive
        energy = -float(a @ a) + self.r_alive + self.shift
        next_state = np.concatenate([position, velocity])
        return next_state, np.array([speed, energy]), False


class MoQuadratic(MOMDPEnv):
    """Single-step environment with one quadratic objective per target.

    The action is a point in the plane; objective ``i`` pays the negative
    squared distance to target ``c_i``. The frontier is the image of the
    convex hull of the targets: for simplex weights ``w`` the action
    ``sum_i w_i c_i`` maximizes the weighted reward, which makes the exact
    frontier available in closed form for oracle checks. The initial state
    is the origin, independent of the seed.
    """

    def __init__(self, targets, action_bound: float = 1.5, gamma: float = 1.0):
        targets = np.asarray(targets, dtype=float)
        if targets.ndim != 2 or targets.shape[0] < 2:
            raise ValueError(f"need at least two targets, got shape {targets.shape}")
        self.targets = targets
        self.spec = MOMDPSpec(
            state_dim=1,
            action_dim=targets.shape[1],
            num_objectives=targets.shape[0],
            horizon=1,
            gamma=gamma,
            action_low=np.full(targets.shape[1], -abs(action_bound)),
            action_high=np.full(targets.shape[1], abs(action_bound)),
        )

    def reset(self, seed: int) -> np.ndarray:
        return np.zeros(1)

    def step(self, state, action):
        a = self.clamp(action)
        diffs = a[None, :] - self.targets
        reward = -np.einsum("ij,ij->i", diffs, diffs)
        return np.zeros(1), reward, True


_DEFAULT_TARGETS_2 = ((1.0, 0.0), (0.0, 1.0))
_DEFAULT_TARGETS_3 = (
    (1.0, 0.0),
    (-0.5, math.sqrt(3.0) / 2.0),
    (-0.5, -math.sqrt(3.0) / 2.0),
)


def _make_quadratic(default_targets, params) -> MoQuadratic:
    params = dict(params)
    targets = params.pop("targets", default_targets)
    return MoQuadratic(targets=targets, **params)


ENV_BUILDERS = {
    "mo_point": lambda **p: MoPoint(**p),
    "mo_quadratic": lambda **p: _make_quadratic(_DEFAULT_TARGETS_2, p),
    "mo_quadratic3": lambda **p: _make_quadratic(_DEFAULT_TARGETS_3, p),
}

#: Reference points guaranteed to be dominated by every policy whose
#: (clamped) behavior the default environments admit.
DEFAULT_REFERENCE_POINTS = {
    "mo_point": (-50.0, 0.0),
    "mo_quadratic": (-9.0, -9.0),
    "mo_quadratic3": (-10.0, -10.0, -10.0),
}


def make_env(name: str, **params) -> MOMDPEnv:
    """Instantiate a built-in environment by name."""
    try:
        builder = ENV_BUILDERS[name]
    except KeyError:
        known = ", ".join(sorted(ENV_BUILDERS))
        raise ValueError(f"unknown environment {name!r}; known environments: {known}") from None
    return builder(**params)
