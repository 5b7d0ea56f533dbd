"""Tit-for-tat agents built from welfare-optimal cooperation and learned punishment.

An `AmTFTAgent` plays its welfare's cooperative policy, keeps a running
"debit" of the opponent's per-step gains from deviating off that policy, and
switches to an opponent-reward-minimizing punishment policy for a number of
steps proportional to the accumulated debit before returning to cooperation.

A `NormAdaptiveAgent` carries a whole set of welfare functions. Each step it
first checks whether the opponent's recent actions are better explained by a
*different* welfare function's cooperative play than by defection; if so it
re-samples its own welfare function instead of punishing. Only deviations that
match no known convention ("unrecognized") count toward the punishment debit.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .games.base import JointAction, rollout
from .games.grid import BargainingCoinGame, CoinGame, GridState
from .games.matrix import MatrixGame, MatrixState
from .planning import (
    MAXIMIZE_OWN,
    MINIMIZE_OPPONENT,
    JointPolicyResult,
    TabularPolicy,
    TabularRunner,
    env_fingerprint,
    q_learning_best_response,
    state_key,
    welfare_optimal_joint_policy,
)
from .validation import as_rng
from .welfare import SHORT_LABELS, WelfareSpec

PHASE_COOPERATE = "cooperate"
PHASE_PUNISH = "punish"

NO_DISAGREEMENT = "no_disagreement"
DISAGREEMENT = "disagreement"
UNRECOGNIZED = "unrecognized"


@dataclass(frozen=True)
class Norm:
    """A rule of play: normative policies, punishment policies, deviation tests.

    ``deviation_rule(history) -> bool`` selects the punishment policy when
    True. For agents built here the rule is the internal phase flag, and
    compliance is checkable by replaying recorded traces.
    """

    normative_policies: tuple[TabularPolicy, TabularPolicy]
    punishment_policies: tuple[Optional[TabularPolicy], Optional[TabularPolicy]]
    description: str = ""


@dataclass
class AmTFTConfig:
    t_debit: float = 0.5
    alpha: float = 2.0
    punish_rollouts: int = 8
    punish_horizon: int = 20

    def to_dict(self) -> dict:
        return {"t_debit": self.t_debit, "alpha": self.alpha,
                "punish_rollouts": self.punish_rollouts,
                "punish_horizon": self.punish_horizon}


@dataclass
class DetectionConfig:
    window: int = 10       # M: steps of history compared
    threshold: float = 0.9  # rho: required match fraction
    dwell: int = 5          # min steps between re-samples

    def to_dict(self) -> dict:
        return {"window": self.window, "threshold": self.threshold, "dwell": self.dwell}


@dataclass(frozen=True)
class Verdict:
    kind: str
    welfare: Optional[str] = None


def detect_normative_disagreement(window: Sequence[dict], welfare_library: Sequence[str],
                                  current_w: str, m: int, rho: float) -> Verdict:
    """Judge the opponent's last `m` steps against known cooperative conventions.

    ``window`` holds one dict per step mapping welfare label -> whether the
    opponent's action matched that welfare's cooperative policy for its seat.
    The verdict follows the best-matching convention; ties prefer the current
    welfare (so agreement is a fixed point even when conventions overlap),
    then earlier library entries.
    """
    if not welfare_library:
        raise ValueError("welfare library must be non-empty")
    if len(window) < m:
        raise ValueError(f"detection needs at least {m} recorded steps, have {len(window)}")
    recent = list(window)[-m:]
    fractions = {
        label: float(np.mean([step.get(label, False) for step in recent]))
        for label in welfare_library
    }
    best_label, best_frac = None, -1.0
    order = [current_w] + [l for l in welfare_library if l != current_w]
    for label in order:
        if label in fractions and fractions[label] > best_frac:
            best_label, best_frac = label, fractions[label]
    if best_frac >= rho:
        if best_label == current_w:
            return Verdict(NO_DISAGREEMENT, current_w)
        return Verdict(DISAGREEMENT, best_label)
    if fractions.get(current_w, 0.0) >= rho:
        return Verdict(NO_DISAGREEMENT, current_w)
    return Verdict(UNRECOGNIZED, None)


def env_reward_pair(env, state, a1: int, a2: int) -> tuple[float, float]:
    """Rewards of one hypothetical step, without advancing the environment."""
    if isinstance(env, MatrixGame):
        return env.reward_pair(a1, a2)
    return env.rewards_for(state, JointAction(a1, a2))


def debit_update(agent: "AmTFTAgent", state, opponent_actual: int,
                 opponent_coop: int) -> float:
    """Per-step debit increment: the opponent's reward gain from deviating.

    Measured holding the agent's own action at its cooperative choice, and
    floored at zero (deviations that hurt the deviator earn no credit).
    """
    own = agent.own_coop_action(state)
    if agent.seat == 1:
        r_actual = env_reward_pair(agent.env, state, own, opponent_actual)[1]
        r_coop = env_reward_pair(agent.env, state, own, opponent_coop)[1]
    else:
        r_actual = env_reward_pair(agent.env, state, opponent_actual, own)[0]
        r_coop = env_reward_pair(agent.env, state, opponent_coop, own)[0]
    return max(0.0, r_actual - r_coop)


def punishment_length(agent: "AmTFTAgent", env, debit: float, seed) -> int:
    """Smallest punishment duration whose simulated opponent loss covers the debit.

    Simulates `punish_rollouts` paired rollouts of `punish_horizon` steps:
    a cooperative baseline (both cooperative policies) and a punished line
    (own punishment policy against the opponent's best response to it). The
    loss at k is the mean gap in the opponent's cumulative reward over the
    first k steps; returns the smallest k with loss >= alpha * debit, capped
    at the horizon.
    """
    if debit <= 0:
        return 0
    cfg = agent.config
    rng = as_rng(seed)
    opp_idx = 1 if agent.seat == 1 else 0
    horizon = cfg.punish_horizon
    base_cum = np.zeros(horizon)
    pun_cum = np.zeros(horizon)
    for _ in range(cfg.punish_rollouts):
        s1, s2 = int(rng.integers(2 ** 31)), int(rng.integers(2 ** 31))
        base = rollout(env, (TabularRunner(agent.coop1), TabularRunner(agent.coop2)),
                       horizon, s1)
        if agent.seat == 1:
            pun_pair = (TabularRunner(agent.punish), TabularRunner(agent.punish_response))
        else:
            pun_pair = (TabularRunner(agent.punish_response), TabularRunner(agent.punish))
        pun = rollout(env, pun_pair, horizon, s2)
        base_cum += np.cumsum(base.rewards()[:, opp_idx])
        pun_cum += np.cumsum(pun.rewards()[:, opp_idx])
    loss = (base_cum - pun_cum) / cfg.punish_rollouts
    need = cfg.alpha * debit
    for k in range(1, horizon + 1):
        if loss[k - 1] >= need:
            return k
    return horizon


class AmTFTAgent:
    """Cooperate per a welfare-optimal policy; punish measured defection."""

    def __init__(self, env, seat: int, welfare: WelfareSpec,
                 coop1: TabularPolicy, coop2: TabularPolicy,
                 punish: TabularPolicy, punish_response: TabularPolicy,
                 config: Optional[AmTFTConfig] = None, seed: int = 0,
                 record_trace: bool = True):
        if seat not in (1, 2):
            raise ValueError("seat must be 1 or 2")
        self.env = env
        self.seat = seat
        self.welfare = welfare
        self.coop1 = coop1
        self.coop2 = coop2
        self.punish = punish
        self.punish_response = punish_response
        self.config = config or AmTFTConfig()
        self.seed = seed
        self.record_trace = record_trace
        self.reset()

    # -- bookkeeping -------------------------------------------------------
    def reset(self) -> None:
        self.phase = PHASE_COOPERATE
        self.debit = 0.0
        self.k_remaining = 0
        self.e1 = 0.0
        self.e2 = 0.0
        self.t = 0
        self.trace: list[dict] = []
        self._length_rng = as_rng(self.seed)

    def _key(self, policy: TabularPolicy, state) -> tuple:
        key = state_key(state)
        spec = policy.bucket_spec()
        if spec is not None:
            key = key + (spec.index(self.e1 - self.e2),)
        return key

    def own_coop_action(self, state) -> int:
        policy = self.coop1 if self.seat == 1 else self.coop2
        return policy.action(self._key(policy, state))

    def opp_coop_action(self, state) -> int:
        policy = self.coop2 if self.seat == 1 else self.coop1
        return policy.action(self._key(policy, state))

    def punish_action(self, state) -> int:
        return self.punish.action(self._key(self.punish, state))

    # -- play ---------------------------------------------------------------
    def act(self, state, rng: np.random.Generator) -> int:
        if self.phase == PHASE_COOPERATE and self.debit > self.config.t_debit:
            k = punishment_length(self, self.env, self.debit,
                                  int(self._length_rng.integers(2 ** 31)))
            if k > 0:
                self.phase = PHASE_PUNISH
                self.k_remaining = k
        if self.phase == PHASE_PUNISH:
            return self.punish_action(state)
        return self.own_coop_action(state)

    def observe(self, state, action: JointAction, rewards, next_state) -> None:
        opp_actual = action.a2 if self.seat == 1 else action.a1
        own_actual = action.a1 if self.seat == 1 else action.a2
        entry = None
        if self.record_trace:
            entry = {"t": self.t, "phase": self.phase, "debit": self.debit,
                     "action": own_actual, "coop_action": self.own_coop_action(state),
                     "punish_action": self.punish_action(state)}
        if self.phase == PHASE_COOPERATE:
            self.debit += self._debit_increment(state, opp_actual)
        else:
            self.k_remaining -= 1
            if self.k_remaining <= 0:
                self.phase = PHASE_COOPERATE
                self.debit = 0.0
        self._update_ledger(rewards)
        self.t += 1
        if entry is not None:
            self.trace.append(entry)

    def _debit_increment(self, state, opp_actual: int) -> float:
        return debit_update(self, state, opp_actual, self.opp_coop_action(state))

    def _update_ledger(self, rewards) -> None:
        for policy in (self.coop1, self.coop2, self.punish):
            spec = policy.bucket_spec()
            if spec is not None:
                decay = spec.gamma * spec.lam
                self.e1 = decay * self.e1 + rewards[0]
                self.e2 = decay * self.e2 + rewards[1]
                return

    def induced_norm(self) -> Norm:
        normative = (self.coop1, self.coop2)
        punishment = (self.punish, None) if self.seat == 1 else (None, self.punish)
        return Norm(normative, punishment,
                    description=f"amTFT({self.welfare.label}) seat {self.seat}")


def amtft_act(agent: AmTFTAgent, observation, history=None,
              rng: Optional[np.random.Generator] = None) -> int:
    """Functional wrapper over the agent's phase machine."""
    return agent.act(observation, rng or as_rng(0))


# ---------------------------------------------------------------------------
# Training.

@dataclass
class AmTFTBundle:
    """Everything one trained run produces: policies for both seats."""

    env_name: str
    welfare: WelfareSpec
    joint: JointPolicyResult
    punish: dict[int, TabularPolicy]            # seat -> punishment policy
    punish_response: dict[int, TabularPolicy]   # seat -> opponent BR to it
    config: AmTFTConfig
    seed: int

    def agent(self, env, seat: int, record_trace: bool = True) -> AmTFTAgent:
        return AmTFTAgent(env, seat, self.welfare,
                          self.joint.policy1, self.joint.policy2,
                          self.punish[seat], self.punish_response[seat],
                          self.config, seed=self.seed + seat,
                          record_trace=record_trace)


def _discard_check(env, welfare: WelfareSpec, values: tuple[float, float],
                   optima: dict[str, tuple[float, float]]) -> bool:
    """True when a utilitarian run's self-play outcome looks egalitarian-like.

    Guards against a cooperative policy that drifted to the wrong convention;
    exact planning never trips it, but learned cooperative policies would.
    """
    from .welfare import classify_convention

    if welfare.kind != "utilitarian" or len(optima) < 2:
        return False
    label = classify_convention(values, optima)
    return label not in ("unclassified", SHORT_LABELS["utilitarian"])


def train_amtft(env, welfare: WelfareSpec, seed: int = 0,
                config: Optional[AmTFTConfig] = None,
                q_episodes: Optional[int] = None,
                optima: Optional[dict[str, tuple[float, float]]] = None,
                max_discards: int = 5) -> AmTFTBundle:
    """Train one run: cooperative pair by planning, punishment by Q-learning.

    A utilitarian run whose self-play outcome classifies as a different
    convention is discarded and retrained with a fresh seed; more than
    `max_discards` consecutive discards abort.
    """
    config = config or AmTFTConfig()
    if q_episodes is None:
        q_episodes = 800 if isinstance(env, MatrixGame) else 20000
    attempt_seed = seed
    for _ in range(max_discards + 1):
        joint = welfare_optimal_joint_policy(env, welfare)
        if optima is not None and _discard_check(env, welfare, joint.values, optima):
            attempt_seed += 1000003
            continue
        punish = {}
        response = {}
        for seat in (1, 2):
            opp_coop = joint.policy2 if seat == 1 else joint.policy1
            punish[seat] = q_learning_best_response(
                env, opp_coop, MINIMIZE_OPPONENT, q_episodes,
                seed=attempt_seed * 4 + seat, seat=seat)
        for seat in (1, 2):
            opp_seat = 2 if seat == 1 else 1
            response[seat] = q_learning_best_response(
                env, punish[seat], MAXIMIZE_OWN, q_episodes,
                seed=attempt_seed * 4 + 2 + seat, seat=opp_seat)
        return AmTFTBundle(env_name=env.name, welfare=welfare, joint=joint,
                           punish=punish, punish_response=response,
                           config=config, seed=seed)
    raise RuntimeError(
        f"more than {max_discards} consecutive discarded runs for "
        f"{welfare.kind} on {env.name}")


# ---------------------------------------------------------------------------
# Norm-adaptive agents.

class NormAdaptiveAgent:
    """amTFT over a welfare-function set, with convention detection.

    ``welfare_order`` lists the agent's own set W (first entry = initial and
    preferred choice); ``bundles`` maps each label in W to a trained
    AmTFTBundle; ``library`` maps every recognizable label (a superset of W)
    to its cooperative policy pair for action matching.
    """

    def __init__(self, env, seat: int, welfare_order: Sequence[str],
                 bundles: dict[str, AmTFTBundle],
                 library: Optional[dict[str, tuple[TabularPolicy, TabularPolicy]]] = None,
                 detection: Optional[DetectionConfig] = None,
                 resample_weights: Optional[dict[str, float]] = None,
                 seed: int = 0, record_trace: bool = True):
        if not welfare_order:
            raise ValueError("welfare set W must be non-empty")
        missing = [w for w in welfare_order if w not in bundles]
        if missing:
            raise ValueError(f"missing trained bundles for {missing}")
        if library is None:
            # Conventions outside the agent's own set are unrecognizable to
            # it: their play is indistinguishable from defection.
            library = {w: (bundles[w].joint.policy1, bundles[w].joint.policy2)
                       for w in welfare_order}
        if not library:
            raise ValueError("welfare library must be non-empty")
        self.env = env
        self.seat = seat
        self.welfare_order = list(welfare_order)
        self.bundles = bundles
        self.library = library
        self.detection = detection or DetectionConfig()
        if resample_weights is None:
            self.resample_labels = list(self.welfare_order)
            self.resample_probs = np.full(len(self.welfare_order),
                                          1.0 / len(self.welfare_order))
        else:
            self.resample_labels = list(resample_weights)
            probs = np.array([resample_weights[k] for k in self.resample_labels], dtype=float)
            if np.any(probs < 0) or probs.sum() <= 0:
                raise ValueError("resample weights must be non-negative and sum > 0")
            unknown = [k for k in self.resample_labels if k not in self.welfare_order]
            if unknown:
                raise ValueError(f"resample weights mention labels outside W: {unknown}")
            self.resample_probs = probs / probs.sum()
        self.seed = seed
        self.record_trace = record_trace
        self.reset()

    @property
    def current_w(self) -> str:
        return self._current

    def reset(self) -> None:
        self._current = self.welfare_order[0]
        self._rng = as_rng(self.seed)
        self._inner = self._make_inner()
        self.window = deque(maxlen=2 * self.detection.window)
        self.steps_since_resample = self.detection.dwell
        self.last_verdict: Optional[Verdict] = None
        self.resample_count = 0
        self.trace: list[dict] = []
        self.t = 0

    def _make_inner(self) -> AmTFTAgent:
        inner = self.bundles[self._current].agent(self.env, self.seat,
                                                  record_trace=False)
        inner.reset()
        return inner

    # -- play ----------------------------------------------------------------
    def act(self, state, rng: np.random.Generator) -> int:
        # Stage 1: resolve normative disagreement before considering punishment.
        if (self.last_verdict is not None
                and self.last_verdict.kind == DISAGREEMENT
                and self._inner.phase == PHASE_COOPERATE
                and self.steps_since_resample >= self.detection.dwell):
            pick = self._rng.choice(len(self.resample_labels), p=self.resample_probs)
            self._switch_to(self.resample_labels[int(pick)])
        # Stage 2: ordinary amTFT under the current welfare function.
        return self._inner.act(state, rng)

    def _switch_to(self, label: str) -> None:
        e1, e2, t = self._inner.e1, self._inner.e2, self._inner.t
        self._current = label
        self._inner = self._make_inner()
        self._inner.e1, self._inner.e2, self._inner.t = e1, e2, t
        self.steps_since_resample = 0
        self.resample_count += 1

    def observe(self, state, action: JointAction, rewards, next_state) -> None:
        opp_actual = action.a2 if self.seat == 1 else action.a1
        # While punishing, the opponent is reacting to the punishment, so its
        # actions carry no evidence about which convention it follows: the
        # window and verdict freeze until cooperation resumes.
        judging = self._inner.phase == PHASE_COOPERATE
        if judging:
            matches = {}
            for label, (c1, c2) in self.library.items():
                policy = c2 if self.seat == 1 else c1
                key = self._inner._key(policy, state)
                try:
                    matches[label] = policy.action(key) == opp_actual
                except KeyError:
                    matches[label] = False
            self.window.append(matches)
            verdict = None
            if len(self.window) >= self.detection.window:
                verdict = detect_normative_disagreement(
                    self.window, list(self.library), self._current,
                    self.detection.window, self.detection.threshold)
            self.last_verdict = verdict
        verdict = self.last_verdict

        # Inner debit bookkeeping: only unrecognized deviations accrue debit.
        accrue = verdict is not None and verdict.kind == UNRECOGNIZED
        if self._inner.phase == PHASE_COOPERATE and not accrue:
            # Let the inner agent update its ledger/phase without charging debit.
            saved = self._inner.debit
            self._inner.observe(state, action, rewards, next_state)
            self._inner.debit = saved
        else:
            self._inner.observe(state, action, rewards, next_state)
        self.steps_since_resample += 1
        self.t += 1
        if self.record_trace:
            self.trace.append({
                "t": self.t - 1, "current_w": self._current,
                "phase": self._inner.phase, "debit": self._inner.debit,
                "verdict": None if verdict is None else (verdict.kind, verdict.welfare),
            })

    @property
    def phase(self) -> str:
        return self._inner.phase


def norm_adaptive_act(agent: NormAdaptiveAgent, observation, history=None,
                      rng: Optional[np.random.Generator] = None) -> int:
    """Functional wrapper: stage-1 detection/resampling, then amTFT play."""
    return agent.act(observation, rng or as_rng(0))


class AmTFTTrainer(BaseEstimator):
    """Estimator wrapper over `train_amtft` with scikit-learn conventions.

    ``fit(env)`` plans the cooperative pair for the given welfare function,
    Q-learns the punishment policies, and exposes the trained bundle as
    ``bundle_``; ``agents_`` holds ready-to-play seat agents.
    """

    def __init__(self, welfare: Optional[WelfareSpec] = None, t_debit: float = 0.5,
                 alpha: float = 2.0, q_episodes: Optional[int] = None, seed: int = 0):
        self.welfare = welfare
        self.t_debit = t_debit
        self.alpha = alpha
        self.q_episodes = q_episodes
        self.seed = seed

    def fit(self, env, y=None):
        from .scoring import welfare_spec as default_spec

        welfare = self.welfare or default_spec(env, "utilitarian")
        cfg = AmTFTConfig(t_debit=self.t_debit, alpha=self.alpha)
        self.bundle_ = train_amtft(env, welfare, seed=self.seed, config=cfg,
                                   q_episodes=self.q_episodes)
        self.agents_ = (self.bundle_.agent(env, 1), self.bundle_.agent(env, 2))
        return self

    def predict(self, state) -> tuple[int, int]:
        """Joint cooperative action of the fitted pair at `state`."""
        a1, a2 = self.agents_
        return (a1.own_coop_action(state), a2.own_coop_action(state))
