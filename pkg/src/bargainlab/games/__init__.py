"""Environments: iterated matrix games, coin gridworlds, and the game taxonomy."""

from .base import (
    ConstantPolicy,
    JointAction,
    Trajectory,
    UniformRandomPolicy,
    rollout,
)
from .classify import (
    GameClass,
    classify_game,
    pareto_optimal_outcomes,
    pure_nash_equilibria,
)
from .grid import (
    BLUE,
    RED,
    BargainingCoinGame,
    Coin,
    CoinGame,
    GridState,
)
from .matrix import (
    MatrixGame,
    MatrixState,
    bos,
    extreme_bos,
    iasymbos,
    ipd,
    pure_coordination,
)

_MATRIX_BUILDERS = {
    "ipd": ipd,
    "iasymbos": iasymbos,
    "bos": bos,
    "pure_coordination": pure_coordination,
    "extreme_bos": extreme_bos,
}


def make_environment(name: str, **kwargs):
    """Build a bundled environment by name.

    Matrix games accept ``gamma`` and (for ipd) payoff overrides; gridworlds
    accept ``grid_size``, ``episode_length``, ``gamma``, and reward settings.
    """
    key = name.lower()
    if key in _MATRIX_BUILDERS:
        return _MATRIX_BUILDERS[key](**kwargs)
    if key in ("coin_game", "cg"):
        return CoinGame(**kwargs)
    if key in ("abcg", "bargaining_coin_game"):
        return BargainingCoinGame(**kwargs)
    raise ValueError(f"unknown environment {name!r}; known: "
                     f"{sorted(_MATRIX_BUILDERS) + ['coin_game', 'abcg']}")


__all__ = [
    "BLUE",
    "RED",
    "BargainingCoinGame",
    "Coin",
    "CoinGame",
    "ConstantPolicy",
    "GameClass",
    "GridState",
    "JointAction",
    "MatrixGame",
    "MatrixState",
    "Trajectory",
    "UniformRandomPolicy",
    "bos",
    "classify_game",
    "extreme_bos",
    "iasymbos",
    "ipd",
    "make_environment",
    "pareto_optimal_outcomes",
    "pure_coordination",
    "pure_nash_equilibria",
    "rollout",
]
