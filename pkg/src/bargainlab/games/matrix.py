"""Iterated two-player matrix games.

A MatrixGame holds the one-shot stage game; iterating it with discounting
gives the repeated game the learners and agents actually play. The state
carried between steps is the previous joint action (None on the first step),
which is exactly what memory-1 policies condition on.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..validation import check_action, check_gamma, check_payoff_array
from .base import JointAction


@dataclass(frozen=True)
class MatrixState:
    """State of an iterated matrix game: the previous joint action, if any."""

    prev: Optional[tuple[int, int]]
    t: int = 0


class MatrixGame:
    """A two-player N x N stage game, iterated with discount `gamma`.

    payoffs[a1, a2] is the reward pair (r1, r2) when player 1 plays a1 and
    player 2 plays a2.
    """

    def __init__(self, name: str, payoffs, gamma: float = 0.96,
                 action_names: Optional[tuple[str, ...]] = None):
        self.name = name
        self.payoffs = check_payoff_array(payoffs)
        self.gamma = check_gamma(gamma)
        self.n_actions = self.payoffs.shape[0]
        self.action_names = action_names or tuple(str(i) for i in range(self.n_actions))

    def action_count(self, player: int) -> int:
        return self.n_actions

    def reward_pair(self, a1: int, a2: int) -> tuple[float, float]:
        a1 = check_action(a1, self.n_actions, player=1)
        a2 = check_action(a2, self.n_actions, player=2)
        r = self.payoffs[a1, a2]
        return float(r[0]), float(r[1])

    def initial_state(self, rng=None) -> MatrixState:
        return MatrixState(prev=None, t=0)

    def step(self, state: MatrixState, action: JointAction, rng=None):
        """Play one stage. Deterministic; `rng` is accepted for interface parity."""
        r = self.reward_pair(action.a1, action.a2)
        nxt = MatrixState(prev=(action.a1, action.a2), t=state.t + 1)
        return nxt, r, (nxt, nxt)

    def swap_players(self) -> "MatrixGame":
        """The same game seen from the other chair (transpose + swapped rewards)."""
        swapped = np.transpose(self.payoffs, (1, 0, 2))[:, :, ::-1].copy()
        return MatrixGame(self.name + "_swapped", swapped, self.gamma, self.action_names)

    def fingerprint(self) -> str:
        body = ",".join(repr(float(x)) for x in self.payoffs.ravel())
        return f"matrix:{self.name}:n={self.n_actions}:gamma={self.gamma!r}:{body}"

    def __repr__(self) -> str:
        return f"MatrixGame({self.name!r}, n_actions={self.n_actions}, gamma={self.gamma})"


# ---------------------------------------------------------------------------
# Bundled stage games.

def pure_coordination(gamma: float = 0.96) -> MatrixGame:
    """Two matching equilibria with identical payoffs: no conflict at all."""
    payoffs = [[(1, 1), (0, 0)],
               [(0, 0), (1, 1)]]
    return MatrixGame("pure_coordination", payoffs, gamma, ("B", "S"))


def bos(gamma: float = 0.96) -> MatrixGame:
    """Bach-or-Stravinsky: both prefer matching, each prefers a different match."""
    payoffs = [[(3, 2), (0, 0)],
               [(0, 0), (2, 3)]]
    return MatrixGame("bos", payoffs, gamma, ("B", "S"))


def iasymbos(gamma: float = 0.96) -> MatrixGame:
    """Asymmetric Bach-or-Stravinsky: BB pays (4,1), SS pays (2,2).

    The two matching equilibria trade total payoff against equality, so
    different welfare functions pick different equilibria.
    """
    payoffs = [[(4, 1), (0, 0)],
               [(0, 0), (2, 2)]]
    return MatrixGame("iasymbos", payoffs, gamma, ("B", "S"))


def extreme_bos(gamma: float = 0.96) -> MatrixGame:
    """BoS with an extreme asymmetry: equilibria (15,10) and (1,11)."""
    payoffs = [[(15, 10), (0, 0)],
               [(0, 0), (1, 11)]]
    return MatrixGame("extreme_bos", payoffs, gamma, ("B", "S"))


def ipd(gamma: float = 0.96, t: float = 0.0, r: float = -1.0,
        p: float = -3.0, s: float = -4.0) -> MatrixGame:
    """Iterated Prisoner's Dilemma. Actions: 0 = cooperate, 1 = defect.

    Defaults satisfy T > R > P > S and 2R > T + S, with mutual defection
    at (-3, -3). All four payoffs are overridable.
    """
    if not (t > r > p > s):
        raise ValueError(f"IPD payoffs need T > R > P > S, got {(t, r, p, s)}")
    if not (2 * r > t + s):
        raise ValueError(f"IPD payoffs need 2R > T + S, got {(t, r, p, s)}")
    payoffs = [[(r, r), (s, t)],
               [(t, s), (p, p)]]
    return MatrixGame("ipd", payoffs, gamma, ("C", "D"))
