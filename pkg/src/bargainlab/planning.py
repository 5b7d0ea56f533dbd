"""Exact planning and tabular learning for the bundled environments.

Matrix games are solved by enumerating deterministic stationary joint actions
plus period-2 alternation schedules; gridworlds by joint value iteration over
their enumerated stationary state space. Punishment and best-response policies
come from tabular Q-learning, gated in the tests against exact best responses
computed by value iteration.

State keys
----------
Tabular policies key on canonical integer tuples:

* matrix games: ``(-1, -1)`` before the first move, else the previous joint
  action ``(a1, a2)``;
* Coin Game: ``(p1, p2, coin_cell, coin_color)``;
* bargaining Coin Game: ``(p1, p2, coop_cell, dc_cell, dc_color)``, with an
  extra trailing inequity-bucket index for equality-aware policies.

Step counters and coin-age timers are deliberately not part of the key:
policies are stationary, and planning uses the timeout-free dynamics (under
any nearly-optimal policy coins are consumed well before the timeout).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .games.base import JointAction
from .games.grid import (
    BLUE,
    RED,
    BargainingCoinGame,
    CoinGame,
    GridState,
    KIND_COOPERATION,
    KIND_DISAGREEMENT,
)
from .games.matrix import MatrixGame, MatrixState
from .validation import as_rng, check_gamma, check_probability_rows
from .welfare import (
    EGALITARIAN,
    INEQUITY_AVERSE,
    KALAI_SMORODINSKY,
    NASH,
    UTILITARIAN,
    FeasibleSet,
    WelfareSpec,
    evaluate_welfare,
    feasible_set,
)

MATRIX_INIT_KEY = (-1, -1)

MAXIMIZE_OWN = "maximize_own"
MINIMIZE_OPPONENT = "minimize_opponent"


# ---------------------------------------------------------------------------
# State keys.

def matrix_state_key(state: MatrixState) -> tuple[int, int]:
    return MATRIX_INIT_KEY if state.prev is None else (state.prev[0], state.prev[1])


def grid_state_key(state: GridState) -> tuple[int, ...]:
    coins = state.coins
    if len(coins) == 1:
        return (state.p1, state.p2, coins[0].cell, coins[0].color)
    cc = state.coin_of_kind(KIND_COOPERATION)
    dc = state.coin_of_kind(KIND_DISAGREEMENT)
    return (state.p1, state.p2, cc.cell, dc.cell, dc.color)


def state_key(state) -> tuple[int, ...]:
    if isinstance(state, MatrixState):
        return matrix_state_key(state)
    if isinstance(state, GridState):
        return grid_state_key(state)
    raise TypeError(f"no key scheme for state type {type(state)!r}")


# ---------------------------------------------------------------------------
# Inequity buckets: a discretized ledger of e1 - e2 making the smoothed
# inequity penalty Markovian.

@dataclass(frozen=True)
class BucketSpec:
    """Symmetric discretization of the smoothed reward gap e1 - e2."""

    limit: float
    n_buckets: int = 21
    gamma: float = 0.96
    lam: float = 0.96

    def centers(self) -> np.ndarray:
        return np.linspace(-self.limit, self.limit, self.n_buckets)

    def index(self, gap: float) -> int:
        if self.limit <= 0:
            return self.n_buckets // 2
        frac = (gap + self.limit) / (2.0 * self.limit)
        return int(np.clip(round(frac * (self.n_buckets - 1)), 0, self.n_buckets - 1))

    def to_dict(self) -> dict:
        return {"limit": self.limit, "n_buckets": self.n_buckets,
                "gamma": self.gamma, "lam": self.lam}

    @staticmethod
    def from_dict(data: dict) -> "BucketSpec":
        return BucketSpec(limit=float(data["limit"]), n_buckets=int(data["n_buckets"]),
                          gamma=float(data["gamma"]), lam=float(data["lam"]))

    @staticmethod
    def for_env(env, lam: float) -> "BucketSpec":
        """Range covers the saturation level of the per-step reward gap."""
        if isinstance(env, BargainingCoinGame):
            max_gap = max(abs(env.coop_rewards[0] - env.coop_rewards[1]), env.dc_reward)
        elif isinstance(env, CoinGame):
            max_gap = abs(env.pickup_reward) + abs(env.stolen_penalty)
        else:
            p = env.payoffs
            max_gap = float(np.abs(p[:, :, 0] - p[:, :, 1]).max())
        limit = max_gap / (1.0 - env.gamma * lam)
        return BucketSpec(limit=limit, gamma=env.gamma, lam=lam)


# ---------------------------------------------------------------------------
# Tabular policies.

@dataclass
class TabularPolicy:
    """State-key -> action-distribution table.

    Rows are probability vectors; deterministic rows may be stored as bare
    action ints, which keeps the large gridworld tables compact.
    ``default_action`` handles lookups of states the table never saw (possible
    for Q-learned policies); exact planners fill every state and leave it None.
    """

    table: dict[tuple[int, ...], object]
    n_actions: int
    env_fingerprint: str = ""
    meta: dict = field(default_factory=dict)
    default_action: Optional[int] = None

    def __post_init__(self):
        for key, row in self.table.items():
            if isinstance(row, (int, np.integer)):
                if not (0 <= int(row) < self.n_actions):
                    raise ValueError(f"action {row} out of range at key {key!r}")
                self.table[key] = int(row)
            else:
                self.table[key] = check_probability_rows(np.asarray(row, dtype=float))

    def probs(self, key) -> np.ndarray:
        row = self.table.get(key)
        if row is None:
            if self.default_action is None:
                raise KeyError(f"no policy row for state key {key!r}")
            row = self.default_action
        if isinstance(row, int):
            out = np.zeros(self.n_actions)
            out[row] = 1.0
            return out
        return row

    def action(self, key, rng: Optional[np.random.Generator] = None) -> int:
        row = self.table.get(key)
        if row is None:
            if self.default_action is None:
                raise KeyError(f"no policy row for state key {key!r}")
            return self.default_action
        if isinstance(row, int):
            return row
        top = row.max()
        if top > 1.0 - 1e-12 or rng is None:
            return int(row.argmax())
        return int(rng.choice(self.n_actions, p=row))

    @property
    def bucketed(self) -> bool:
        return "bucket_spec" in self.meta

    def bucket_spec(self) -> Optional[BucketSpec]:
        spec = self.meta.get("bucket_spec")
        return BucketSpec.from_dict(spec) if spec else None


@dataclass
class TabularRunner:
    """Plays a TabularPolicy in rollouts, tracking the inequity ledger if needed."""

    policy: TabularPolicy
    e1: float = 0.0
    e2: float = 0.0

    def reset(self) -> None:
        self.e1 = 0.0
        self.e2 = 0.0

    def current_key(self, state) -> tuple[int, ...]:
        key = state_key(state)
        spec = self.policy.bucket_spec()
        if spec is not None:
            key = key + (spec.index(self.e1 - self.e2),)
        return key

    def act(self, state, rng: np.random.Generator) -> int:
        return self.policy.action(self.current_key(state), rng)

    def observe(self, state, action, rewards, next_state) -> None:
        spec = self.policy.bucket_spec()
        if spec is not None:
            decay = spec.gamma * spec.lam
            self.e1 = decay * self.e1 + rewards[0]
            self.e2 = decay * self.e2 + rewards[1]


def make_runner(policy: TabularPolicy) -> TabularRunner:
    return TabularRunner(policy)


# ---------------------------------------------------------------------------
# Matrix-game joint planning: constants and period-2 alternation schedules.

def _schedule_value(game: MatrixGame, cycle: tuple[tuple[int, int], ...],
                    gamma: float) -> tuple[float, float]:
    """Exact discounted value pair of repeating `cycle` forever."""
    if len(cycle) == 1:
        r = game.payoffs[cycle[0]]
        return float(r[0]) / (1.0 - gamma), float(r[1]) / (1.0 - gamma)
    r0 = game.payoffs[cycle[0]]
    r1 = game.payoffs[cycle[1]]
    denom = 1.0 - gamma * gamma
    return (float(r0[0] + gamma * r1[0]) / denom,
            float(r0[1] + gamma * r1[1]) / denom)


def _schedule_policy(game: MatrixGame, cycle: tuple[tuple[int, int], ...],
                     seat: int) -> TabularPolicy:
    """Encode a (period-1 or period-2) joint schedule as a memory-1 table.

    Off-schedule histories restart the cycle, so the policy is total.
    """
    n = game.n_actions
    first, second = cycle[0], cycle[1] if len(cycle) > 1 else cycle[0]
    table: dict[tuple[int, ...], object] = {}
    seat_of = lambda joint: joint[seat - 1]
    table[MATRIX_INIT_KEY] = seat_of(first)
    for a1 in range(n):
        for a2 in range(n):
            prev = (a1, a2)
            if prev == first:
                nxt = second
            else:
                # covers prev == second and every off-schedule history
                nxt = first
            table[prev] = seat_of(nxt)
    return TabularPolicy(table, n, env_fingerprint=game.fingerprint(),
                         meta={"schedule": [list(c) for c in cycle], "seat": seat})


@dataclass
class JointPolicyResult:
    policy1: TabularPolicy
    policy2: TabularPolicy
    values: tuple[float, float]
    welfare_value: float
    schedule: Optional[tuple] = None


def _matrix_joint_optimal(game: MatrixGame, spec: WelfareSpec,
                          gamma: float) -> JointPolicyResult:
    n = game.n_actions
    joints = [(a1, a2) for a1 in range(n) for a2 in range(n)]
    cycles = [(j,) for j in joints]
    cycles += [(x, y) for x in joints for y in joints if x != y]
    fs = feasible_set(game, gamma)
    profiles = {c: _schedule_value(game, c, gamma) for c in cycles}

    candidates = list(cycles)
    if spec.kind in (EGALITARIAN, KALAI_SMORODINSKY, NASH):
        # Honor the Pareto-optimality side constraint among realizable schedules.
        def dominated(c):
            v = profiles[c]
            return any(
                profiles[o][0] >= v[0] and profiles[o][1] >= v[1]
                and (profiles[o][0] > v[0] or profiles[o][1] > v[1])
                for o in cycles if o != c)
        candidates = [c for c in cycles if not dominated(c)]

    best_cycle, best_value = None, -np.inf
    for c in candidates:
        try:
            value = evaluate_welfare(spec, profiles[c], fs)
        except ValueError:
            continue
        if best_cycle is None or value > best_value + 1e-9:
            best_cycle, best_value = c, value
        elif value >= best_value - 1e-9:
            v_new, v_old = profiles[c], profiles[best_cycle]
            if (v_new[0], v_new[1]) > (v_old[0], v_old[1]):
                best_cycle, best_value = c, max(best_value, value)
    if best_cycle is None:
        raise ValueError(f"no admissible schedule for welfare {spec.kind}")
    return JointPolicyResult(
        policy1=_schedule_policy(game, best_cycle, seat=1),
        policy2=_schedule_policy(game, best_cycle, seat=2),
        values=profiles[best_cycle],
        welfare_value=float(best_value),
        schedule=best_cycle,
    )


# ---------------------------------------------------------------------------
# Gridworld models: enumerated stationary dynamics for value iteration.

class GridModel:
    """Vectorized stationary dynamics of a coin gridworld.

    Consumption events lead to a uniform respawn of the coin configuration,
    so continuation values after consumption are averages of V over the
    configurations valid for the new player positions.
    """

    def __init__(self, env):
        if not isinstance(env, (CoinGame, BargainingCoinGame)):
            raise TypeError(f"GridModel supports coin gridworlds, got {type(env)!r}")
        self.env = env
        self.is_abcg = isinstance(env, BargainingCoinGame)
        self.n_cells = env.n_cells
        self.gamma = env.gamma
        self._enumerate()
        self._build_transitions()

    # -- enumeration ------------------------------------------------------
    def _enumerate(self) -> None:
        g = self.n_cells
        if self.is_abcg:
            self.configs = [(cc, dc, color)
                            for cc in range(g) for dc in range(g) if cc != dc
                            for color in (RED, BLUE)]
        else:
            self.configs = [(cell, color) for cell in range(g) for color in (RED, BLUE)]
        self.n_configs = len(self.configs)
        self.config_index = {cfg: i for i, cfg in enumerate(self.configs)}
        self.n_pp = g * g
        self.n_states = self.n_pp * self.n_configs
        self.joint_actions = [(a1, a2) for a1 in range(4) for a2 in range(4)]

    def key_of(self, idx: int) -> tuple[int, ...]:
        pp, cfg_i = divmod(idx, self.n_configs)
        p1, p2 = divmod(pp, self.n_cells)
        return (p1, p2) + self.configs[cfg_i]

    def index_of_key(self, key: tuple[int, ...]) -> int:
        p1, p2 = key[0], key[1]
        cfg = tuple(key[2:])
        return (p1 * self.n_cells + p2) * self.n_configs + self.config_index[cfg]

    def state_index(self, state: GridState) -> int:
        return self.index_of_key(grid_state_key(state))

    # -- transitions ------------------------------------------------------
    def _build_transitions(self) -> None:
        env = self.env
        S, A = self.n_states, len(self.joint_actions)
        move = np.array([[env.move(c, a) for a in range(4)] for c in range(self.n_cells)])

        self.r1 = np.zeros((S, A))
        self.r2 = np.zeros((S, A))
        self.consumed = np.zeros((S, A), dtype=bool)
        self.det_next = np.zeros((S, A), dtype=np.int64)
        self.next_pp = np.zeros((S, A), dtype=np.int64)

        for idx in range(S):
            key = self.key_of(idx)
            p1, p2 = key[0], key[1]
            cfg = tuple(key[2:])
            for ai, (a1, a2) in enumerate(self.joint_actions):
                n1, n2 = int(move[p1, a1]), int(move[p2, a2])
                r1 = r2 = 0.0
                consumed = False
                if self.is_abcg:
                    cc, dc, color = cfg
                    if n1 == cc and n2 == cc:
                        r1 += env.coop_rewards[0]
                        r2 += env.coop_rewards[1]
                        consumed = True
                    owner = n1 if color == RED else n2
                    if owner == dc:
                        if color == RED:
                            r1 += env.dc_reward
                        else:
                            r2 += env.dc_reward
                        consumed = True
                else:
                    cell, color = cfg
                    if n1 == cell:
                        r1 += env.pickup_reward
                        if color == BLUE:
                            r2 += env.stolen_penalty
                        consumed = True
                    if n2 == cell:
                        r2 += env.pickup_reward
                        if color == RED:
                            r1 += env.stolen_penalty
                        consumed = True
                self.r1[idx, ai] = r1
                self.r2[idx, ai] = r2
                self.consumed[idx, ai] = consumed
                pp = n1 * self.n_cells + n2
                self.next_pp[idx, ai] = pp
                self.det_next[idx, ai] = pp * self.n_configs + self.config_index[cfg]

        # Valid respawn configurations per position pair (coins avoid players).
        self.respawn_mask = np.zeros((self.n_pp, self.n_configs), dtype=bool)
        for pp in range(self.n_pp):
            p1, p2 = divmod(pp, self.n_cells)
            for ci, cfg in enumerate(self.configs):
                cells = cfg[:-1] if self.is_abcg else cfg[:1]
                self.respawn_mask[pp, ci] = all(c not in (p1, p2) for c in cells)
        self.respawn_count = self.respawn_mask.sum(axis=1)

    def respawn_average(self, v_flat: np.ndarray) -> np.ndarray:
        """Mean of V over valid coin configurations, per position pair."""
        vr = v_flat.reshape(self.n_pp, self.n_configs)
        return (vr * self.respawn_mask).sum(axis=1) / self.respawn_count

    def initial_state_indices(self) -> np.ndarray:
        """All states the environment can start in (players apart, coins clear)."""
        out = []
        for pp in range(self.n_pp):
            p1, p2 = divmod(pp, self.n_cells)
            if p1 == p2:
                continue
            for ci in range(self.n_configs):
                if self.respawn_mask[pp, ci]:
                    out.append(pp * self.n_configs + ci)
        return np.array(out, dtype=np.int64)


def _grid_joint_value_iteration(model: GridModel, team_reward: np.ndarray,
                                tol: float = 1e-8, max_sweeps: int = 4000):
    """VI over joint actions for a scalar team reward array of shape (S, A)."""
    g = model.gamma
    V = np.zeros(model.n_states)
    for _ in range(max_sweeps):
        W = model.respawn_average(V)
        cont = np.where(model.consumed, W[model.next_pp], V[model.det_next])
        Q = team_reward + g * cont
        V_new = Q.max(axis=1)
        delta = np.abs(V_new - V).max()
        V = V_new
        if delta < tol:
            break
    W = model.respawn_average(V)
    cont = np.where(model.consumed, W[model.next_pp], V[model.det_next])
    Q = team_reward + g * cont
    return V, Q


def _grid_joint_value_iteration_ia(model: GridModel, bucket: BucketSpec,
                                   beta_step: float, tol: float = 1e-8,
                                   max_sweeps: int = 4000):
    """VI with the inequity ledger folded into the state as a bucket index."""
    g = model.gamma
    S, A = model.n_states, len(model.joint_actions)
    B = bucket.n_buckets
    centers = bucket.centers()
    decay = bucket.gamma * bucket.lam
    dgap = model.r1 - model.r2

    # next-bucket index and post-update gap magnitude, per (state, action, bucket)
    new_gap = decay * centers[None, None, :] + dgap[:, :, None]
    frac = (new_gap + bucket.limit) / (2.0 * bucket.limit)
    bnext = np.clip(np.rint(frac * (B - 1)), 0, B - 1).astype(np.int8)
    reward = (model.r1 + model.r2)[:, :, None] - beta_step * np.abs(new_gap)

    V = np.zeros((S, B))
    for _ in range(max_sweeps):
        Wr = model.respawn_mask[:, :, None] * V.reshape(model.n_pp, model.n_configs, B)
        W = Wr.sum(axis=1) / model.respawn_count[:, None]
        V_new = np.empty_like(V)
        for b in range(B):
            bp = bnext[:, :, b]
            cont = np.where(model.consumed, W[model.next_pp, bp], V[model.det_next, bp])
            V_new[:, b] = (reward[:, :, b] + g * cont).max(axis=1)
        delta = np.abs(V_new - V).max()
        V = V_new
        if delta < tol:
            break
    Q = np.empty((S, A, B))
    Wr = model.respawn_mask[:, :, None] * V.reshape(model.n_pp, model.n_configs, B)
    W = Wr.sum(axis=1) / model.respawn_count[:, None]
    for b in range(B):
        bp = bnext[:, :, b]
        cont = np.where(model.consumed, W[model.next_pp, bp], V[model.det_next, bp])
        Q[:, :, b] = reward[:, :, b] + g * cont
    return V, Q


_GRID_MODEL_CACHE: dict[str, GridModel] = {}


def grid_model(env) -> GridModel:
    key = _env_fingerprint(env)
    if key not in _GRID_MODEL_CACHE:
        _GRID_MODEL_CACHE[key] = GridModel(env)
    return _GRID_MODEL_CACHE[key]


def _env_fingerprint(env) -> str:
    if isinstance(env, MatrixGame):
        return env.fingerprint()
    if isinstance(env, BargainingCoinGame):
        return (f"abcg:g={env.grid_size}:coop={env.coop_rewards}:dc={env.dc_reward}"
                f":timeout={env.coin_timeout}:gamma={env.gamma!r}")
    if isinstance(env, CoinGame):
        return (f"coin:g={env.grid_size}:pickup={env.pickup_reward}"
                f":penalty={env.stolen_penalty}:gamma={env.gamma!r}")
    raise TypeError(f"unknown environment type {type(env)!r}")


def env_fingerprint(env) -> str:
    return _env_fingerprint(env)


def _grid_joint_optimal(env, spec: WelfareSpec, gamma: float) -> JointPolicyResult:
    if spec.kind not in (UTILITARIAN, INEQUITY_AVERSE):
        raise ValueError(
            f"gridworld joint planning supports utilitarian and inequity_averse "
            f"welfare only (no per-step team reward exists for {spec.kind})")
    model = grid_model(env)
    fingerprint = _env_fingerprint(env)

    def extract(Q, bucket: Optional[BucketSpec]):
        tables: tuple[dict, dict] = ({}, {})
        if bucket is None:
            best = Q.argmax(axis=1)
            for idx in range(model.n_states):
                key = model.key_of(idx)
                a1, a2 = model.joint_actions[int(best[idx])]
                tables[0][key] = a1
                tables[1][key] = a2
            meta = {}
        else:
            best = Q.argmax(axis=1)  # (S, B)
            for idx in range(model.n_states):
                base = model.key_of(idx)
                for b in range(bucket.n_buckets):
                    a1, a2 = model.joint_actions[int(best[idx, b])]
                    key = base + (b,)
                    tables[0][key] = a1
                    tables[1][key] = a2
            meta = {"bucket_spec": bucket.to_dict()}
        return (TabularPolicy(tables[0], 4, fingerprint, dict(meta, seat=1)),
                TabularPolicy(tables[1], 4, fingerprint, dict(meta, seat=2)))

    if spec.kind == UTILITARIAN:
        V, Q = _grid_joint_value_iteration(model, model.r1 + model.r2)
        p1, p2 = extract(Q, None)
        start = float(V[model.initial_state_indices()].mean())
        values = _evaluate_grid_joint(model, p1, p2, None)
        return JointPolicyResult(p1, p2, values, welfare_value=start)

    bucket = BucketSpec.for_env(env, spec.lam)
    beta_step = spec.beta * (1.0 - gamma)
    V, Q = _grid_joint_value_iteration_ia(model, bucket, beta_step)
    p1, p2 = extract(Q, bucket)
    mid = bucket.n_buckets // 2
    start = float(V[model.initial_state_indices(), mid].mean())
    values = _evaluate_grid_joint(model, p1, p2, bucket)
    return JointPolicyResult(p1, p2, values, welfare_value=start)


def _evaluate_grid_joint(model: GridModel, p1: TabularPolicy, p2: TabularPolicy,
                         bucket: Optional[BucketSpec],
                         tol: float = 1e-8) -> tuple[float, float]:
    """Exact per-player values of a deterministic joint policy pair (policy evaluation)."""
    S = model.n_states
    if bucket is None:
        act = np.zeros(S, dtype=np.int64)
        for idx in range(S):
            key = model.key_of(idx)
            a1 = int(p1.probs(key).argmax())
            a2 = int(p2.probs(key).argmax())
            act[idx] = a1 * 4 + a2
        rows = np.arange(S)
        r1 = model.r1[rows, act]
        r2 = model.r2[rows, act]
        consumed = model.consumed[rows, act]
        det = model.det_next[rows, act]
        npp = model.next_pp[rows, act]
        v1 = np.zeros(S)
        v2 = np.zeros(S)
        for _ in range(4000):
            w1 = model.respawn_average(v1)
            w2 = model.respawn_average(v2)
            n1 = r1 + model.gamma * np.where(consumed, w1[npp], v1[det])
            n2 = r2 + model.gamma * np.where(consumed, w2[npp], v2[det])
            delta = max(np.abs(n1 - v1).max(), np.abs(n2 - v2).max())
            v1, v2 = n1, n2
            if delta < tol:
                break
        starts = model.initial_state_indices()
        return float(v1[starts].mean()), float(v2[starts].mean())

    B = bucket.n_buckets
    centers = bucket.centers()
    decay = bucket.gamma * bucket.lam
    dgap = model.r1 - model.r2
    act = np.zeros((S, B), dtype=np.int64)
    for idx in range(S):
        base = model.key_of(idx)
        for b in range(B):
            key = base + (b,)
            a1 = int(p1.probs(key).argmax())
            a2 = int(p2.probs(key).argmax())
            act[idx, b] = a1 * 4 + a2
    rows = np.arange(S)[:, None]
    r1 = model.r1[rows, act]
    r2 = model.r2[rows, act]
    consumed = model.consumed[rows, act]
    det = model.det_next[rows, act]
    npp = model.next_pp[rows, act]
    new_gap = decay * centers[None, :] + dgap[rows, act]
    frac = (new_gap + bucket.limit) / (2.0 * bucket.limit)
    bnext = np.clip(np.rint(frac * (B - 1)), 0, B - 1).astype(np.int64)
    v1 = np.zeros((S, B))
    v2 = np.zeros((S, B))
    for _ in range(4000):
        w1 = (model.respawn_mask[:, :, None] * v1.reshape(model.n_pp, model.n_configs, B)
              ).sum(axis=1) / model.respawn_count[:, None]
        w2 = (model.respawn_mask[:, :, None] * v2.reshape(model.n_pp, model.n_configs, B)
              ).sum(axis=1) / model.respawn_count[:, None]
        n1 = r1 + model.gamma * np.where(consumed, w1[npp, bnext], v1[det, bnext])
        n2 = r2 + model.gamma * np.where(consumed, w2[npp, bnext], v2[det, bnext])
        delta = max(np.abs(n1 - v1).max(), np.abs(n2 - v2).max())
        v1, v2 = n1, n2
        if delta < tol:
            break
    starts = model.initial_state_indices()
    mid = B // 2
    return float(v1[starts, mid].mean()), float(v2[starts, mid].mean())


_JOINT_CACHE: dict[tuple, JointPolicyResult] = {}


def welfare_optimal_joint_policy(env, spec: WelfareSpec,
                                 gamma: float | None = None) -> JointPolicyResult:
    """Joint policy pair maximizing the welfare of stationary play.

    Matrix games search deterministic joint actions and period-2 alternation
    schedules; gridworlds run joint value iteration on the welfare-induced
    team reward (with a discretized inequity ledger for the equality-aware
    kind). Deterministic throughout, so independently trained agents obtain
    identical cooperative policies; results are memoized per (environment,
    welfare, discount). Treat the returned policy tables as read-only.
    """
    if isinstance(env, MatrixGame):
        g = env.gamma if gamma is None else check_gamma(gamma)
        builder = _matrix_joint_optimal
    elif isinstance(env, (CoinGame, BargainingCoinGame)):
        g = env.gamma if gamma is None else check_gamma(gamma)
        builder = _grid_joint_optimal
    else:
        raise ValueError(f"joint planning not implemented for {type(env)!r}")
    key = (_env_fingerprint(env), spec.kind, spec.d, spec.beta, spec.lam, g)
    if key not in _JOINT_CACHE:
        _JOINT_CACHE[key] = builder(env, spec, g)
    return _JOINT_CACHE[key]


# ---------------------------------------------------------------------------
# Best responses: exact (value iteration) and learned (tabular Q-learning).

def _matrix_states(game: MatrixGame) -> list[tuple[int, int]]:
    n = game.n_actions
    return [MATRIX_INIT_KEY] + [(a1, a2) for a1 in range(n) for a2 in range(n)]


def _opponent_action(policy: TabularPolicy, key, bucket_state=None) -> int:
    if policy.bucket_spec() is not None and bucket_state is not None:
        key = key + (bucket_state,)
    return int(policy.probs(key).argmax())


def best_response_value_iteration(env, opponent: TabularPolicy, seat: int,
                                  objective: str = MAXIMIZE_OWN,
                                  tol: float = 1e-10) -> tuple[TabularPolicy, float]:
    """Exact best response of `seat` against a fixed deterministic opponent.

    Returns the greedy policy and its objective value from the environment's
    initial-state distribution. The objective is the seat's own reward or the
    negated opponent reward.
    """
    if objective not in (MAXIMIZE_OWN, MINIMIZE_OPPONENT):
        raise ValueError(f"unknown objective {objective!r}")
    if isinstance(env, MatrixGame):
        return _matrix_best_response(env, opponent, seat, objective, tol)
    return _grid_best_response(env, opponent, seat, objective, tol)


def _reward_sign_and_index(objective: str, seat: int):
    if objective == MAXIMIZE_OWN:
        return 1.0, seat - 1
    return -1.0, 2 - seat  # opponent's reward, negated


def _matrix_best_response(game, opponent, seat, objective, tol):
    n = game.n_actions
    states = _matrix_states(game)
    sign, ridx = _reward_sign_and_index(objective, seat)
    g = game.gamma
    V = {s: 0.0 for s in states}
    for _ in range(20000):
        V_new = {}
        delta = 0.0
        for s in states:
            opp_a = _opponent_action(opponent, s)
            best = -np.inf
            for a in range(n):
                joint = (a, opp_a) if seat == 1 else (opp_a, a)
                r = sign * float(game.payoffs[joint][ridx])
                best = max(best, r + g * V[joint])
            V_new[s] = best
            delta = max(delta, abs(best - V[s]))
        V = V_new
        if delta < tol:
            break
    table = {}
    for s in states:
        opp_a = _opponent_action(opponent, s)
        q = []
        for a in range(n):
            joint = (a, opp_a) if seat == 1 else (opp_a, a)
            r = sign * float(game.payoffs[joint][ridx])
            q.append(r + g * V[joint])
        table[s] = int(np.argmax(q))
    policy = TabularPolicy(table, n, env_fingerprint=game.fingerprint(),
                           meta={"objective": objective, "seat": seat})
    return policy, float(V[MATRIX_INIT_KEY])


def _grid_best_response(env, opponent, seat, objective, tol):
    model = grid_model(env)
    sign, ridx = _reward_sign_and_index(objective, seat)
    rewards = (model.r1, model.r2)[ridx] * sign
    bucket = opponent.bucket_spec()
    S = model.n_states
    opp_seat_actions = _grid_opponent_actions(model, opponent, bucket)

    if bucket is None:
        # my 4 actions against the opponent's fixed action per state
        my_joint = np.zeros((S, 4), dtype=np.int64)
        for a in range(4):
            if seat == 1:
                my_joint[:, a] = a * 4 + opp_seat_actions
            else:
                my_joint[:, a] = opp_seat_actions * 4 + a
        rows = np.arange(S)[:, None]
        r = rewards[rows, my_joint]
        consumed = model.consumed[rows, my_joint]
        det = model.det_next[rows, my_joint]
        npp = model.next_pp[rows, my_joint]
        V = np.zeros(S)
        for _ in range(4000):
            W = model.respawn_average(V)
            Q = r + model.gamma * np.where(consumed, W[npp], V[det])
            V_new = Q.max(axis=1)
            delta = np.abs(V_new - V).max()
            V = V_new
            if delta < tol:
                break
        W = model.respawn_average(V)
        Q = r + model.gamma * np.where(consumed, W[npp], V[det])
        best = Q.argmax(axis=1)
        table = {}
        for idx in range(S):
            table[model.key_of(idx)] = int(best[idx])
        policy = TabularPolicy(table, 4, env_fingerprint=_env_fingerprint(env),
                               meta={"objective": objective, "seat": seat})
        starts = model.initial_state_indices()
        return policy, float(V[starts].mean())

    B = bucket.n_buckets
    centers = bucket.centers()
    decay = bucket.gamma * bucket.lam
    my_joint = np.zeros((S, B, 4), dtype=np.int64)
    for b in range(B):
        for a in range(4):
            if seat == 1:
                my_joint[:, b, a] = a * 4 + opp_seat_actions[:, b]
            else:
                my_joint[:, b, a] = opp_seat_actions[:, b] * 4 + a
    rows = np.arange(S)[:, None, None]
    r = rewards[rows, my_joint]
    consumed = model.consumed[rows, my_joint]
    det = model.det_next[rows, my_joint]
    npp = model.next_pp[rows, my_joint]
    dgap = (model.r1 - model.r2)[rows, my_joint]
    new_gap = decay * centers[None, :, None] + dgap
    frac = (new_gap + bucket.limit) / (2.0 * bucket.limit)
    bnext = np.clip(np.rint(frac * (B - 1)), 0, B - 1).astype(np.int64)
    V = np.zeros((S, B))
    for _ in range(4000):
        W = (model.respawn_mask[:, :, None] * V.reshape(model.n_pp, model.n_configs, B)
             ).sum(axis=1) / model.respawn_count[:, None]
        Q = r + model.gamma * np.where(consumed, W[npp, bnext], V[det, bnext])
        V_new = Q.max(axis=2)
        delta = np.abs(V_new - V).max()
        V = V_new
        if delta < tol:
            break
    W = (model.respawn_mask[:, :, None] * V.reshape(model.n_pp, model.n_configs, B)
         ).sum(axis=1) / model.respawn_count[:, None]
    Q = r + model.gamma * np.where(consumed, W[npp, bnext], V[det, bnext])
    best = Q.argmax(axis=2)
    table = {}
    for idx in range(S):
        base = grid_state_key_from_index(model, idx)
        for b in range(B):
            table[base + (b,)] = int(best[idx, b])
    policy = TabularPolicy(table, 4, env_fingerprint=_env_fingerprint(env),
                           meta={"objective": objective, "seat": seat,
                                 "bucket_spec": bucket.to_dict()})
    starts = model.initial_state_indices()
    return policy, float(V[starts, B // 2].mean())


def grid_state_key_from_index(model: GridModel, idx: int) -> tuple[int, ...]:
    return model.key_of(idx)


def _grid_opponent_actions(model: GridModel, opponent: TabularPolicy,
                           bucket: Optional[BucketSpec]):
    S = model.n_states
    if bucket is None:
        out = np.zeros(S, dtype=np.int64)
        for idx in range(S):
            out[idx] = int(opponent.probs(model.key_of(idx)).argmax())
        return out
    B = bucket.n_buckets
    out = np.zeros((S, B), dtype=np.int64)
    for idx in range(S):
        base = model.key_of(idx)
        for b in range(B):
            out[idx, b] = int(opponent.probs(base + (b,)).argmax())
    return out


def q_learning_best_response(env, opponent: TabularPolicy, objective: str,
                             episodes: int, seed, seat: int = 1,
                             episode_length: Optional[int] = None,
                             learning_rate: float = 0.1,
                             epsilon_start: float = 0.3,
                             epsilon_end: float = 0.05,
                             opponent_epsilon: float = 0.1) -> TabularPolicy:
    """Epsilon-greedy tabular Q-learning against a fixed opponent.

    Epsilon decays linearly over episodes; the returned policy is greedy.
    During training the opponent's action is randomized with probability
    ``opponent_epsilon`` so that states off the opponent's own path are still
    visited (the learned policy is later deployed against other opponents);
    states the learner never visited fall back to action 0.

    Gridworlds run the same update rule over the enumerated model with
    batched synchronous chains, which is what makes tabular learning over
    ~10^4..10^5 states affordable.
    """
    if objective not in (MAXIMIZE_OWN, MINIMIZE_OPPONENT):
        raise ValueError(f"unknown objective {objective!r}")
    if isinstance(env, (CoinGame, BargainingCoinGame)):
        return _grid_q_learning(env, opponent, objective, episodes, seed, seat,
                                episode_length, learning_rate,
                                epsilon_start, epsilon_end, opponent_epsilon)
    rng = as_rng(seed)
    g = env.gamma
    n = env.action_count(seat)
    n_opp = env.action_count(2 if seat == 1 else 1)
    sign, ridx = _reward_sign_and_index(objective, seat)
    if episode_length is None:
        episode_length = getattr(env, "episode_length", 20)
    opp_runner = TabularRunner(opponent)
    q: dict[tuple, np.ndarray] = {}

    # Optimistic initialization: with the pinned epsilon schedule, a zero
    # start lets whichever action is tried first lock in its lead at rarely
    # visited states; starting at the best attainable value makes greedy play
    # keep testing every action until its estimate settles.
    if isinstance(env, MatrixGame):
        r_obj = sign * env.payoffs[:, :, ridx]
        optimistic = float(r_obj.max()) / (1.0 - g)
    else:
        optimistic = 0.0

    def q_row(key):
        row = q.get(key)
        if row is None:
            row = np.full(n, optimistic)
            q[key] = row
        return row

    bucket = opponent.bucket_spec()
    # Exploring starts for matrix games: the previous-joint-action state space
    # is tiny but barely mixes under greedy play, so episodes start anywhere.
    matrix_starts = None
    if isinstance(env, MatrixGame):
        matrix_starts = [MatrixState(prev=None)] + [
            MatrixState(prev=(a1, a2), t=1)
            for a1 in range(env.n_actions) for a2 in range(env.n_actions)]
    for ep in range(episodes):
        eps = epsilon_start + (epsilon_end - epsilon_start) * (ep / max(episodes - 1, 1))
        if matrix_starts is not None:
            state = matrix_starts[int(rng.integers(len(matrix_starts)))]
        else:
            state = env.initial_state(rng)
        opp_runner.reset()
        for _ in range(episode_length):
            key = opp_runner.current_key(state) if bucket is not None else state_key(state)
            row = q_row(key)
            if rng.random() < eps:
                a = int(rng.integers(n))
            else:
                a = int(row.argmax())
            if rng.random() < opponent_epsilon:
                opp_a = int(rng.integers(n_opp))
            else:
                opp_a = opp_runner.act(state, rng)
            joint = JointAction(a, opp_a) if seat == 1 else JointAction(opp_a, a)
            nxt, rewards, _ = env.step(state, joint, rng)
            opp_runner.observe(state, joint, rewards, nxt)
            r = sign * rewards[ridx]
            nxt_key = opp_runner.current_key(nxt) if bucket is not None else state_key(nxt)
            target = r + g * q_row(nxt_key).max()
            row[a] += learning_rate * (target - row[a])
            state = nxt
    table = {}
    for key, row in q.items():
        table[key] = int(row.argmax())
    meta = {"objective": objective, "seat": seat, "episodes": episodes}
    if bucket is not None:
        meta["bucket_spec"] = bucket.to_dict()
    return TabularPolicy(table, n, env_fingerprint=_env_fingerprint(env),
                         meta=meta, default_action=0)


def _grid_q_learning(env, opponent, objective, episodes, seed, seat,
                     episode_length, learning_rate, epsilon_start, epsilon_end,
                     opponent_epsilon, batch: int = 64) -> TabularPolicy:
    """Array-backed epsilon-greedy Q-learning over the enumerated grid model."""
    model = grid_model(env)
    rng = as_rng(seed)
    g = model.gamma
    sign, ridx = _reward_sign_and_index(objective, seat)
    base_r = (model.r1, model.r2)[ridx] * sign
    bucket = opponent.bucket_spec()
    opp_actions = _grid_opponent_actions(model, opponent, bucket)
    if episode_length is None:
        episode_length = env.episode_length
    S = model.n_states
    starts = model.initial_state_indices()

    # respawn sampler: valid configs per position pair, padded to a rectangle
    max_cfg = int(model.respawn_count.max())
    cfg_table = np.zeros((model.n_pp, max_cfg), dtype=np.int64)
    for pp in range(model.n_pp):
        valid = np.flatnonzero(model.respawn_mask[pp])
        cfg_table[pp, :len(valid)] = valid
    cfg_count = model.respawn_count.astype(np.int64)

    if bucket is not None:
        B = bucket.n_buckets
        centers = bucket.centers()
        decay = bucket.gamma * bucket.lam
        dgap = model.r1 - model.r2
        new_gap = decay * centers[None, None, :] + dgap[:, :, None]
        frac = (new_gap + bucket.limit) / (2.0 * bucket.limit)
        bnext = np.clip(np.rint(frac * (B - 1)), 0, B - 1).astype(np.int64)
        Q = np.zeros((S, B, 4))
    else:
        B = 1
        Q = np.zeros((S, 1, 4))
        opp_actions = opp_actions[:, None]
        bnext = None

    steps_per_batch_episode = episode_length
    n_batches = max(1, int(np.ceil(episodes / batch)))
    state = starts[rng.integers(len(starts), size=batch)]
    buck = np.full(batch, B // 2, dtype=np.int64)
    for ep in range(n_batches):
        frac_ep = ep / max(n_batches - 1, 1)
        eps = epsilon_start + (epsilon_end - epsilon_start) * frac_ep
        state = starts[rng.integers(len(starts), size=batch)]
        buck = np.full(batch, B // 2, dtype=np.int64)
        for _ in range(steps_per_batch_episode):
            rows = Q[state, buck]
            a = rows.argmax(axis=1)
            explore = rng.random(batch) < eps
            a[explore] = rng.integers(4, size=explore.sum())
            opp_a = opp_actions[state, buck]
            opp_explore = rng.random(batch) < opponent_epsilon
            opp_a[opp_explore] = rng.integers(4, size=opp_explore.sum())
            joint = a * 4 + opp_a if seat == 1 else opp_a * 4 + a
            r = base_r[state, joint]
            consumed = model.consumed[state, joint]
            nxt = model.det_next[state, joint].copy()
            if consumed.any():
                pp = model.next_pp[state[consumed], joint[consumed]]
                pick = (rng.random(consumed.sum()) * cfg_count[pp]).astype(np.int64)
                nxt[consumed] = pp * model.n_configs + cfg_table[pp, pick]
            nbuck = bnext[state, joint, buck] if bnext is not None else buck
            target = r + g * Q[nxt, nbuck].max(axis=1)
            np.add.at(Q, (state, buck, a), learning_rate * (target - Q[state, buck, a]))
            state, buck = nxt, nbuck

    best = Q.argmax(axis=2)
    table = {}
    meta = {"objective": objective, "seat": seat, "episodes": episodes}
    if bucket is None:
        for idx in range(S):
            table[model.key_of(idx)] = int(best[idx, 0])
    else:
        meta["bucket_spec"] = bucket.to_dict()
        for idx in range(S):
            base = model.key_of(idx)
            for b in range(B):
                table[base + (b,)] = int(best[idx, b])
    return TabularPolicy(table, 4, env_fingerprint=_env_fingerprint(env),
                         meta=meta, default_action=0)


# ---------------------------------------------------------------------------
# Minimax over pure stage actions.

@dataclass(frozen=True)
class MinimaxResult:
    value_per_step: float
    value_discounted: float
    minimizing_action: int
    maximizing_response: int


def minimax(game: MatrixGame, player: int, gamma: float | None = None) -> MinimaxResult:
    """min over opponent actions of max over own actions of the player's reward."""
    if player not in (1, 2):
        raise ValueError("player must be 1 or 2")
    g = game.gamma if gamma is None else check_gamma(gamma)
    n = game.n_actions
    r = game.payoffs[:, :, player - 1]
    best_val, best_opp, best_resp = np.inf, 0, 0
    for opp_a in range(n):
        if player == 1:
            own_vals = [r[a, opp_a] for a in range(n)]
        else:
            own_vals = [r[opp_a, a] for a in range(n)]
        resp = int(np.argmax(own_vals))
        val = float(own_vals[resp])
        if val < best_val:
            best_val, best_opp, best_resp = val, opp_a, resp
    return MinimaxResult(value_per_step=best_val,
                         value_discounted=best_val / (1.0 - g),
                         minimizing_action=best_opp,
                         maximizing_response=best_resp)


def punishment_action(game: MatrixGame, seat: int) -> int:
    """Own stage action that holds the opponent to its lowest best-case reward."""
    n = game.n_actions
    opp = 2 if seat == 1 else 1
    r = game.payoffs[:, :, opp - 1]
    best_a, best_val = 0, np.inf
    for a in range(n):
        worst = (r[a, :] if seat == 1 else r[:, a]).max()
        if worst < best_val:
            best_a, best_val = a, float(worst)
    return best_a
