"""Stage-game taxonomy: coordination problems, bargaining problems, symmetry.

Classification looks at pure strategies only. A joint action is a pure Nash
equilibrium if neither player gains by a unilateral deviation; it is
Pareto-optimal if no other joint action weakly improves both players and
strictly improves one. A game is then

* a coordination problem if it has at least two Pareto-optimal pure
  equilibria (players must agree on which one to play),
* mixed-motive if some pair of outcomes is ranked oppositely by the players,
* a bargaining problem if it is a coordination problem and two of its
  Pareto-optimal equilibria are themselves ranked oppositely,
* symmetric if the multiset of attainable payoff profiles is invariant
  under swapping the players.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .matrix import MatrixGame


@dataclass(frozen=True)
class GameClass:
    is_mixed_motive: bool
    is_coordination_problem: bool
    is_bargaining_problem: bool
    is_symmetric: bool


def pure_nash_equilibria(game: MatrixGame) -> list[tuple[int, int]]:
    """All pure-strategy Nash equilibria of the stage game."""
    p = game.payoffs
    n = game.n_actions
    eqs = []
    for a1 in range(n):
        for a2 in range(n):
            best1 = p[a1, a2, 0] >= p[:, a2, 0].max() - 1e-12
            best2 = p[a1, a2, 1] >= p[a1, :, 1].max() - 1e-12
            if best1 and best2:
                eqs.append((a1, a2))
    return eqs


def pareto_optimal_outcomes(game: MatrixGame) -> set[tuple[int, int]]:
    """Joint actions not Pareto-dominated by any other joint action."""
    p = game.payoffs
    n = game.n_actions
    cells = [(a1, a2) for a1 in range(n) for a2 in range(n)]
    out = set()
    for cell in cells:
        v = p[cell]
        dominated = any(
            (p[other][0] >= v[0] and p[other][1] >= v[1])
            and (p[other][0] > v[0] or p[other][1] > v[1])
            for other in cells if other != cell
        )
        if not dominated:
            out.add(cell)
    return out


def is_payoff_symmetric(game: MatrixGame) -> bool:
    """True when every attainable payoff profile (a, b) has a twin (b, a)."""
    profiles = Counter(
        (round(float(r[0]), 9), round(float(r[1]), 9))
        for r in game.payoffs.reshape(-1, 2)
    )
    swapped = Counter((b, a) for (a, b) in profiles.elements())
    return profiles == swapped


def classify_game(game: MatrixGame) -> GameClass:
    """Classify a stage game; see the module docstring for the definitions."""
    p = game.payoffs
    n = game.n_actions
    cells = [(a1, a2) for a1 in range(n) for a2 in range(n)]

    mixed_motive = any(
        p[x][0] > p[y][0] and p[x][1] < p[y][1]
        for x in cells for y in cells
    )

    pareto_eqs = [e for e in pure_nash_equilibria(game)
                  if e in pareto_optimal_outcomes(game)]
    coordination = len(pareto_eqs) >= 2

    bargaining = coordination and any(
        p[x][0] > p[y][0] and p[x][1] < p[y][1]
        for x in pareto_eqs for y in pareto_eqs
    )

    return GameClass(
        is_mixed_motive=bool(mixed_motive),
        is_coordination_problem=bool(coordination),
        is_bargaining_problem=bool(bargaining),
        is_symmetric=is_payoff_symmetric(game),
    )
