"""Per-environment scoring conventions: disagreement points, welfare sets, values.

Outcome values are reported in discounted units everywhere. For stationary
learners on matrix games they are exact (induced-chain solve or cycle sums);
for agents that negotiate before settling (norm-adaptive play) and for
gridworlds, the reported value is the steady-state rate: the per-step mean
reward of the trailing half of the simulation scaled by 1/(1-gamma). This
measures the convention the pair actually reached rather than the transient
cost of reaching it, which is the quantity the cross-play comparisons are
about; the run manifest records the convention.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .games.base import rollout
from .games.grid import BargainingCoinGame, CoinGame
from .games.matrix import MatrixGame
from .welfare import (
    EGALITARIAN,
    INEQUITY_AVERSE,
    NASH,
    SHORT_LABELS,
    UTILITARIAN,
    FeasibleSet,
    WelfareSpec,
    feasible_set,
    welfare_optimum,
)

DEFAULT_BETA = 1.0
DEFAULT_LAM = 0.96


def disagreement_profile(env) -> tuple[float, float]:
    """Value-level payoff profile of bargaining failure for each environment."""
    if isinstance(env, MatrixGame) and env.name.startswith("ipd"):
        p = float(env.payoffs[1, 1, 0])
        return (p / (1.0 - env.gamma), p / (1.0 - env.gamma))
    return (0.0, 0.0)


def welfare_spec(env, kind: str, beta: float = DEFAULT_BETA,
                 lam: float = DEFAULT_LAM) -> WelfareSpec:
    """A welfare function wired to this environment's disagreement point."""
    return WelfareSpec(kind=kind, d=disagreement_profile(env), beta=beta, lam=lam)


def default_scoring_set(env, beta: float = DEFAULT_BETA,
                        lam: float = DEFAULT_LAM) -> list[WelfareSpec]:
    """The welfare set used for normalized scores in each environment."""
    if isinstance(env, (BargainingCoinGame,)) or (
            isinstance(env, MatrixGame) and env.name in ("iasymbos", "bos", "extreme_bos")):
        return [welfare_spec(env, UTILITARIAN),
                welfare_spec(env, INEQUITY_AVERSE, beta=beta, lam=lam)]
    return [welfare_spec(env, UTILITARIAN)]


def default_library_kinds(env) -> list[str]:
    """Welfare functions whose conventions an agent tries to recognize.

    Order matters: detection ties resolve toward earlier entries. Gridworlds
    only support kinds with a per-step team reward.
    """
    if isinstance(env, (CoinGame, BargainingCoinGame)):
        return [UTILITARIAN, INEQUITY_AVERSE]
    return [UTILITARIAN, INEQUITY_AVERSE, EGALITARIAN, NASH]


def matrix_optima_profiles(env: MatrixGame, specs: Sequence[WelfareSpec]) -> dict:
    """Per-welfare optimum value profiles over the exact feasible set."""
    fs = feasible_set(env)
    out = {}
    for spec in specs:
        point, _ = welfare_optimum(spec, fs)
        out[spec.label] = point
    return out


def grid_feasible_set(env, optima_profiles: dict[str, tuple[float, float]]) -> FeasibleSet:
    """Proxy feasible set for gridworlds: hull of disagreement and known optima.

    Gridworld payoff regions have no closed form; alternating between the
    planned optima realizes their convex combinations, which is all the
    normalized score needs.
    """
    vertices = [disagreement_profile(env)] + list(optima_profiles.values())
    return FeasibleSet(vertices, env.gamma)


# ---------------------------------------------------------------------------
# Steady-state value measurement.

def _cycle_value(rewards: np.ndarray, gamma: float,
                 window_len: int = 50) -> Optional[tuple[float, float]]:
    """Exact discounted value of a trailing periodic reward stream (period <= 2)."""
    if len(rewards) < window_len:
        return None
    window = rewards[-window_len:]
    for period in (1, 2):
        if not np.allclose(window[:-period], window[period:], atol=1e-12):
            continue
        if period == 1:
            r = window[-1]
            return (float(r[0]) / (1.0 - gamma), float(r[1]) / (1.0 - gamma))
        # continuing stream repeats (window[-2], window[-1], ...)
        r0, r1 = window[-2], window[-1]
        denom = 1.0 - gamma * gamma
        return (float(r0[0] + gamma * r1[0]) / denom,
                float(r0[1] + gamma * r1[1]) / denom)
    return None


def steady_state_value_matrix(env: MatrixGame, agents, n_steps: int = 600,
                              seed: int = 0) -> tuple[float, float]:
    """Simulate a matrix-game pairing and value its settled play.

    If the trailing rewards are periodic with period one or two (locked
    conventions always are), the value is the exact discounted cycle sum,
    sharing its arithmetic with the feasible-set vertices; otherwise the
    trailing-half mean scaled by 1/(1-gamma).
    """
    traj = rollout(env, agents, n_steps, seed)
    rewards = traj.rewards()
    cycle = _cycle_value(rewards, env.gamma)
    if cycle is not None:
        return cycle
    m1, m2 = traj.mean_step_rewards(tail_fraction=0.5)
    return (m1 / (1.0 - env.gamma), m2 / (1.0 - env.gamma))


def steady_state_value_grid(env, agents, episodes: int = 10,
                            seed: int = 0) -> tuple[float, float]:
    """Mean trailing-half step reward over seeded episodes, in discounted units."""
    rng_seeds = np.random.SeedSequence(seed).spawn(episodes)
    totals = np.zeros(2)
    for ep, ss in enumerate(rng_seeds):
        traj = rollout(env, agents, env.episode_length,
                       np.random.default_rng(ss))
        m1, m2 = traj.mean_step_rewards(tail_fraction=0.5)
        totals += (m1, m2)
    means = totals / episodes
    return (float(means[0]) / (1.0 - env.gamma), float(means[1]) / (1.0 - env.gamma))
