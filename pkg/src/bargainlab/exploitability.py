"""Grim welfare policies and the minimax ceiling on cross-play returns.

For a welfare function with a deterministic optimal schedule on an iterated
matrix game, the grim construction plays the schedule's seat policy until the
opponent deviates from the schedule's *other* seat even once, then switches
permanently to the action that holds the opponent to its lowest best-case
reward. Self-play never triggers, so the policy stays welfare-optimal; in
cross-play between two different welfare functions both sides eventually
trigger, and from that point each player's tail return is bounded above by
its pure-action minimax value. `verify_bound` checks that bound (and the
equilibrium cross-play inequality) by direct simulation; `exploitation_gap`
measures what a flexible norm-adaptive agent concedes to a rigid one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .games.base import JointAction
from .games.matrix import MatrixGame
from .planning import (
    MATRIX_INIT_KEY,
    MinimaxResult,
    TabularPolicy,
    matrix_state_key,
    minimax,
    punishment_action,
    welfare_optimal_joint_policy,
)
from .validation import as_rng, check_gamma
from .welfare import WelfareSpec


@dataclass
class GrimWelfarePolicy:
    """One seat of a welfare-optimal profile with a permanent minimax trigger."""

    game: MatrixGame
    seat: int
    base: TabularPolicy
    opponent_base: TabularPolicy
    minimax_action: int
    welfare_label: str
    triggered: bool = False
    _expected_opp: Optional[int] = None

    def reset(self) -> None:
        self.triggered = False
        self._expected_opp = None

    def act(self, state, rng=None) -> int:
        if self.triggered:
            return self.minimax_action
        key = matrix_state_key(state)
        self._expected_opp = self.opponent_base.action(key)
        return self.base.action(key)

    def observe(self, state, action: JointAction, rewards, next_state) -> None:
        if self.triggered:
            return
        opp_actual = action.a2 if self.seat == 1 else action.a1
        if self._expected_opp is not None and opp_actual != self._expected_opp:
            self.triggered = True


def build_grim_policy(game: MatrixGame, spec: WelfareSpec, seat: int,
                      gamma: float | None = None) -> GrimWelfarePolicy:
    """Grim trigger around the welfare's deterministic optimal schedule."""
    g = game.gamma if gamma is None else check_gamma(gamma)
    joint = welfare_optimal_joint_policy(game, spec, g)
    if joint.schedule is None:
        raise ValueError(
            f"no deterministic welfare-optimal schedule for {spec.kind} on {game.name}")
    base = joint.policy1 if seat == 1 else joint.policy2
    other = joint.policy2 if seat == 1 else joint.policy1
    return GrimWelfarePolicy(game=game, seat=seat, base=base, opponent_base=other,
                             minimax_action=punishment_action(game, seat),
                             welfare_label=spec.label)


@dataclass
class BoundReport:
    game: str
    welfare_1: str
    welfare_2: str
    status: str                     # "holds", "violated", or "premise_failed"
    reason: str = ""
    t_found: Optional[int] = None
    tail_values: Optional[tuple[float, float]] = None
    bounds: Optional[tuple[float, float]] = None
    episode_values: Optional[tuple[float, float]] = None

    @property
    def holds(self) -> bool:
        return self.status == "holds"

    def to_dict(self) -> dict:
        return {
            "game": self.game, "welfare_1": self.welfare_1, "welfare_2": self.welfare_2,
            "status": self.status, "reason": self.reason, "t_found": self.t_found,
            "tail_values": self.tail_values, "bounds": self.bounds,
            "episode_values": self.episode_values,
        }


def _simulate_grim_cross(game: MatrixGame, g1: GrimWelfarePolicy,
                         g2: GrimWelfarePolicy, horizon: int):
    g1.reset()
    g2.reset()
    state = game.initial_state()
    rewards = []
    trigger_step = None
    for t in range(horizon):
        a1 = g1.act(state, None)
        a2 = g2.act(state, None)
        action = JointAction(a1, a2)
        state_next, r, _ = game.step(state, action, None)
        for p in (g1, g2):
            p.observe(state, action, r, state_next)
        rewards.append(r)
        if trigger_step is None and g1.triggered and g2.triggered:
            trigger_step = t + 1  # both punish from the next step on
        state = state_next
    return np.array(rewards), trigger_step


def verify_bound(game: MatrixGame, w: WelfareSpec, w_prime: WelfareSpec,
                 gamma: float | None = None, horizon: int = 500,
                 slack: float = 1e-6) -> BoundReport:
    """Check the minimax ceiling on post-trigger cross-play returns.

    Premises: the two welfare functions are distinct with distinct optimal
    schedules, and each player's minimax value sits strictly below the value
    it gets from its preferred optimum. When the premises hold, the report
    asserts tail values (from the first step with both sides triggered, summed
    over `horizon` simulated steps) do not exceed the discounted pure-action
    minimax values, up to the discount-tail slack.
    """
    g = game.gamma if gamma is None else check_gamma(gamma)
    names = (game.name, w.label, w_prime.label)
    if w.kind == w_prime.kind:
        return BoundReport(*names, status="premise_failed",
                           reason="welfare functions are not distinct")
    jw = welfare_optimal_joint_policy(game, w, g)
    jwp = welfare_optimal_joint_policy(game, w_prime, g)
    if jw.schedule == jwp.schedule:
        return BoundReport(*names, status="premise_failed",
                           reason="optimal schedules coincide; no normative conflict")
    mm1 = minimax(game, 1, g)
    mm2 = minimax(game, 2, g)
    pref1 = max(jw.values[0], jwp.values[0])
    pref2 = max(jw.values[1], jwp.values[1])
    if not (mm1.value_discounted < pref1 - 1e-9 and mm2.value_discounted < pref2 - 1e-9):
        return BoundReport(*names, status="premise_failed",
                           reason="minimax value not strictly below the preferred optimum")

    g1 = build_grim_policy(game, w, seat=1, gamma=g)
    g2 = build_grim_policy(game, w_prime, seat=2, gamma=g)
    rewards, t_found = _simulate_grim_cross(game, g1, g2, horizon)
    disc = g ** np.arange(horizon)
    episode_values = tuple(float(x) for x in disc @ rewards)
    if t_found is None:
        return BoundReport(*names, status="premise_failed",
                           reason="players never both triggered within the horizon",
                           episode_values=episode_values)
    tail = rewards[t_found:]
    tail_disc = g ** np.arange(len(tail))
    tail_values = tuple(float(x) for x in tail_disc @ tail)
    bounds = (mm1.value_discounted, mm2.value_discounted)
    ok = tail_values[0] <= bounds[0] + slack and tail_values[1] <= bounds[1] + slack
    return BoundReport(*names, status="holds" if ok else "violated",
                       t_found=t_found, tail_values=tail_values, bounds=bounds,
                       episode_values=episode_values)


def crossplay_value_ceiling(game: MatrixGame, w: WelfareSpec, w_prime: WelfareSpec,
                            gamma: float | None = None,
                            horizon: int = 500) -> dict:
    """Exact check of the equilibrium inequality on base (untriggered) profiles.

    Cross-play of the two welfare-optimal schedules cannot pay either player
    more than the worse of that player's values under the two profiles.
    """
    g = game.gamma if gamma is None else check_gamma(gamma)
    jw = welfare_optimal_joint_policy(game, w, g)
    jwp = welfare_optimal_joint_policy(game, w_prime, g)
    from .planning import TabularRunner
    from .games.base import rollout

    traj = rollout(game, (TabularRunner(jw.policy1), TabularRunner(jwp.policy2)),
                   horizon, seed=0)
    v1, v2 = traj.discounted_values()
    ceiling = (min(jw.values[0], jwp.values[0]), min(jw.values[1], jwp.values[1]))
    tail = (game.payoffs.max() / (1 - g)) * g ** horizon + 1e-9
    return {
        "cross_values": (v1, v2),
        "ceiling": ceiling,
        "holds": bool(v1 <= ceiling[0] + tail and v2 <= ceiling[1] + tail),
    }


def exploitation_gap(env, flexible_agent_factory, rigid_agent_factory,
                     flexible_selfplay_value: float, rigid_selfplay_value: float,
                     n_steps: int = 400, seed: int = 0) -> dict:
    """Measure what each side concedes in cross-play relative to its own optimum.

    The factories build fresh seat-1 / seat-2 agents; values are steady-state
    (trailing-half per-step means scaled to discounted units). The flexible
    side's gap is the measured cost of adaptivity.
    """
    from .games.base import rollout

    a1 = flexible_agent_factory()
    a2 = rigid_agent_factory()
    traj = rollout(env, (a1, a2), n_steps, seed)
    m1, m2 = traj.mean_step_rewards(tail_fraction=0.5)
    v1 = m1 / (1.0 - env.gamma)
    v2 = m2 / (1.0 - env.gamma)
    return {
        "cross_values": (v1, v2),
        "flexible_gap": v1 - flexible_selfplay_value,
        "rigid_gap": v2 - rigid_selfplay_value,
        "flexible_final_w": getattr(a1, "current_w", None),
        "rigid_final_w": getattr(a2, "current_w", None),
    }
