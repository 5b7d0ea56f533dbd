"""Gridworld coin games on a small torus.

Two variants share the board mechanics:

* CoinGame — the classic social dilemma. One colored coin is on the board.
  Stepping onto it picks it up (+1 to the picker); if the picker's color
  differs from the coin's, the coin's owner additionally receives -2. When
  both players step onto the coin simultaneously, both receive the pickup
  reward and the -2 penalties apply per the color rule.

* BargainingCoinGame — two coins are always on the board: one cooperation
  coin (uncolored) and one disagreement coin (red or blue). The cooperation
  coin is consumed only when both players occupy its cell on the same step
  and pays an asymmetric reward pair. The disagreement coin is consumed only
  by the player whose color matches it and pays a flat reward to that player.
  After any consumption, or after `coin_timeout` steps without one, both
  coins respawn together at uniformly random distinct empty cells.

Movement is simultaneous on a toroidal grid with actions
{0: up, 1: down, 2: left, 3: right}; players may share a cell.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from ..validation import check_action, check_gamma
from .base import JointAction

RED, BLUE = 0, 1
COLOR_NAMES = ("red", "blue")
ACTION_NAMES = ("up", "down", "left", "right")

KIND_PLAIN = "plain"
KIND_COOPERATION = "cooperation"
KIND_DISAGREEMENT = "disagreement"


@dataclass(frozen=True)
class Coin:
    """One coin: its kind, color (None for the uncolored cooperation coin), cell."""

    kind: str
    color: Optional[int]
    cell: int


@dataclass(frozen=True)
class GridState:
    """Full board configuration. Hashable so tabular policies can key on it."""

    p1: int  # red player's cell
    p2: int  # blue player's cell
    coins: tuple[Coin, ...]
    t: int = 0
    coin_age: int = 0

    def coin_of_kind(self, kind: str) -> Optional[Coin]:
        for c in self.coins:
            if c.kind == kind:
                return c
        return None


class GridGameBase:
    """Board mechanics shared by both coin games."""

    n_players_actions = 4

    def __init__(self, grid_size: int = 3, episode_length: int = 100,
                 gamma: float = 0.96, name: str = "grid"):
        if grid_size < 2:
            raise ValueError("grid_size must be >= 2")
        self.grid_size = int(grid_size)
        self.n_cells = self.grid_size * self.grid_size
        self.episode_length = int(episode_length)
        self.gamma = check_gamma(gamma)
        self.name = name

    def action_count(self, player: int) -> int:
        return 4

    def move(self, cell: int, action: int) -> int:
        """Toroidal move of one cell."""
        g = self.grid_size
        row, col = divmod(cell, g)
        if action == 0:
            row = (row - 1) % g
        elif action == 1:
            row = (row + 1) % g
        elif action == 2:
            col = (col - 1) % g
        elif action == 3:
            col = (col + 1) % g
        else:
            raise ValueError(f"unknown action {action}")
        return row * g + col

    def _free_cells(self, occupied: tuple[int, ...]) -> list[int]:
        return [c for c in range(self.n_cells) if c not in occupied]

    def _check_state(self, state: GridState) -> None:
        for cell in (state.p1, state.p2):
            if not (0 <= cell < self.n_cells):
                raise ValueError(f"player cell {cell} outside the {self.grid_size}x{self.grid_size} grid")


class CoinGame(GridGameBase):
    """Classic two-player Coin Game on a torus."""

    def __init__(self, grid_size: int = 3, episode_length: int = 100,
                 gamma: float = 0.96, pickup_reward: float = 1.0,
                 stolen_penalty: float = -2.0):
        super().__init__(grid_size, episode_length, gamma, name="coin_game")
        self.pickup_reward = float(pickup_reward)
        self.stolen_penalty = float(stolen_penalty)

    def _spawn_coin(self, p1: int, p2: int, rng) -> Coin:
        free = self._free_cells((p1, p2))
        cell = free[int(rng.integers(len(free)))]
        color = int(rng.integers(2))
        return Coin(KIND_PLAIN, color, cell)

    def initial_state(self, rng) -> GridState:
        cells = rng.permutation(self.n_cells)
        p1, p2 = int(cells[0]), int(cells[1])
        return GridState(p1, p2, (self._spawn_coin(p1, p2, rng),), t=0)

    def rewards_for(self, state: GridState, action: JointAction) -> tuple[float, float]:
        """Rewards of one step, deterministic in (state, action)."""
        check_action(action.a1, 4, 1)
        check_action(action.a2, 4, 2)
        n1 = self.move(state.p1, action.a1)
        n2 = self.move(state.p2, action.a2)
        coin = state.coins[0]
        r1 = r2 = 0.0
        if n1 == coin.cell:
            r1 += self.pickup_reward
            if coin.color == BLUE:
                r2 += self.stolen_penalty
        if n2 == coin.cell:
            r2 += self.pickup_reward
            if coin.color == RED:
                r1 += self.stolen_penalty
        return r1, r2

    def step(self, state: GridState, action: JointAction, rng):
        self._check_state(state)
        rewards = self.rewards_for(state, action)
        n1 = self.move(state.p1, action.a1)
        n2 = self.move(state.p2, action.a2)
        coin = state.coins[0]
        picked = (n1 == coin.cell) or (n2 == coin.cell)
        coins = (self._spawn_coin(n1, n2, rng),) if picked else state.coins
        nxt = GridState(n1, n2, coins, t=state.t + 1)
        return nxt, rewards, (nxt, nxt)


class BargainingCoinGame(GridGameBase):
    """Coin Game variant with a shared cooperation coin and a private one.

    Default rewards: joint consumption of the cooperation coin pays
    (3, 1) to (red, blue); the disagreement coin pays +1 to its color owner.
    Always-cooperating maximizes total reward but splits it unevenly, so
    equality-sensitive objectives visit the disagreement coin too. The
    disagreement reward is calibrated: at +1 the total-reward optimum
    consumes cooperation coins only, while any higher value makes grabbing
    nearby disagreement coins part of the total-reward optimum as well
    (consumption respawns both coins, so quick grabs raise the overall rate).
    """

    def __init__(self, grid_size: int = 3, episode_length: int = 100,
                 gamma: float = 0.96,
                 coop_rewards: tuple[float, float] = (3.0, 1.0),
                 dc_reward: float = 1.0, coin_timeout: int = 10):
        super().__init__(grid_size, episode_length, gamma, name="abcg")
        self.coop_rewards = (float(coop_rewards[0]), float(coop_rewards[1]))
        self.dc_reward = float(dc_reward)
        self.coin_timeout = int(coin_timeout)

    def _spawn_coins(self, p1: int, p2: int, rng) -> tuple[Coin, Coin]:
        free = self._free_cells((p1, p2))
        idx = rng.permutation(len(free))
        cc_cell, dc_cell = free[int(idx[0])], free[int(idx[1])]
        dc_color = int(rng.integers(2))
        return (Coin(KIND_COOPERATION, None, cc_cell),
                Coin(KIND_DISAGREEMENT, dc_color, dc_cell))

    def initial_state(self, rng) -> GridState:
        cells = rng.permutation(self.n_cells)
        p1, p2 = int(cells[0]), int(cells[1])
        return GridState(p1, p2, self._spawn_coins(p1, p2, rng), t=0, coin_age=0)

    def _consumption(self, state: GridState, n1: int, n2: int):
        cc = state.coin_of_kind(KIND_COOPERATION)
        dc = state.coin_of_kind(KIND_DISAGREEMENT)
        coop_taken = n1 == cc.cell and n2 == cc.cell
        owner_cell = n1 if dc.color == RED else n2
        dc_taken = owner_cell == dc.cell
        return coop_taken, dc_taken, dc

    def rewards_for(self, state: GridState, action: JointAction) -> tuple[float, float]:
        check_action(action.a1, 4, 1)
        check_action(action.a2, 4, 2)
        n1 = self.move(state.p1, action.a1)
        n2 = self.move(state.p2, action.a2)
        coop_taken, dc_taken, dc = self._consumption(state, n1, n2)
        r1 = r2 = 0.0
        if coop_taken:
            r1 += self.coop_rewards[0]
            r2 += self.coop_rewards[1]
        if dc_taken:
            if dc.color == RED:
                r1 += self.dc_reward
            else:
                r2 += self.dc_reward
        return r1, r2

    def step(self, state: GridState, action: JointAction, rng):
        self._check_state(state)
        rewards = self.rewards_for(state, action)
        n1 = self.move(state.p1, action.a1)
        n2 = self.move(state.p2, action.a2)
        coop_taken, dc_taken, _ = self._consumption(state, n1, n2)
        consumed = coop_taken or dc_taken
        timed_out = state.coin_age + 1 >= self.coin_timeout
        if consumed or timed_out:
            coins = self._spawn_coins(n1, n2, rng)
            age = 0
        else:
            coins = state.coins
            age = state.coin_age + 1
        nxt = GridState(n1, n2, coins, t=state.t + 1, coin_age=age)
        return nxt, rewards, (nxt, nxt)
