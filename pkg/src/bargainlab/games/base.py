"""Shared environment machinery: states, trajectories, rollouts.

All environments are two-player, fully observed, simultaneous-move games.
An environment object is a single-writer state machine: it owns no mutable
state itself (states are passed in and returned), so distinct instances and
even one shared instance can be used from several threads as long as each
rollout keeps its own state and RNG.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from ..validation import check_gamma, as_rng


@dataclass(frozen=True)
class JointAction:
    """One simultaneous action pair (index per player)."""

    a1: int
    a2: int

    def __iter__(self):
        return iter((self.a1, self.a2))


@dataclass
class Trajectory:
    """Ordered rollout record: one (state, joint action, reward pair) per step."""

    steps: list[tuple[object, JointAction, tuple[float, float]]]
    discount: float

    def __len__(self) -> int:
        return len(self.steps)

    def rewards(self) -> np.ndarray:
        """Rewards as a (T, 2) array."""
        return np.array([r for (_, _, r) in self.steps], dtype=float)

    def discounted_values(self) -> tuple[float, float]:
        """Discounted value pair sum_t gamma^t * r_t over the recorded steps."""
        r = self.rewards()
        g = self.discount ** np.arange(len(self.steps))
        v = g @ r
        return float(v[0]), float(v[1])

    def mean_step_rewards(self, tail_fraction: float = 1.0) -> tuple[float, float]:
        """Per-step mean reward pair, optionally over only the trailing fraction."""
        r = self.rewards()
        start = int(round(len(r) * (1.0 - tail_fraction)))
        tail = r[start:]
        m = tail.mean(axis=0)
        return float(m[0]), float(m[1])


class Policy(Protocol):
    """Anything that maps an observation to an action index."""

    def act(self, observation, rng: np.random.Generator) -> int: ...


class Environment(Protocol):
    """Two-player simultaneous-move environment with explicit state passing."""

    name: str
    gamma: float

    def action_count(self, player: int) -> int: ...

    def initial_state(self, rng: np.random.Generator): ...

    def step(self, state, action: JointAction, rng: np.random.Generator): ...


@dataclass
class ConstantPolicy:
    """Plays one fixed action index forever."""

    action: int

    def act(self, observation, rng: np.random.Generator) -> int:
        return self.action

    def reset(self) -> None:
        pass


@dataclass
class UniformRandomPolicy:
    """Uniform random over the player's action set."""

    n_actions: int

    def act(self, observation, rng: np.random.Generator) -> int:
        return int(rng.integers(self.n_actions))

    def reset(self) -> None:
        pass


def rollout(env, policies: Sequence, length: int, seed) -> Trajectory:
    """Roll a policy pair for exactly `length` steps.

    The trajectory is reproducible: the same (env, policies, length, seed)
    always produces the same steps. Policies with a ``reset`` method are
    reset first so stateful agents start fresh.
    """
    if length < 1:
        raise ValueError(f"rollout length must be >= 1, got {length}")
    rng = as_rng(seed)
    p1, p2 = policies
    for p in (p1, p2):
        if hasattr(p, "reset"):
            p.reset()
    state = env.initial_state(rng)
    steps = []
    for _ in range(length):
        a1 = p1.act(state, rng)
        a2 = p2.act(state, rng)
        action = JointAction(int(a1), int(a2))
        state_next, rewards, _obs = env.step(state, action, rng)
        steps.append((state, action, rewards))
        for p in (p1, p2):
            if hasattr(p, "observe"):
                p.observe(state, action, rewards, state_next)
        state = state_next
    return Trajectory(steps=steps, discount=env.gamma)
