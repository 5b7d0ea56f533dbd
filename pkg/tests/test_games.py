"""Environments: stage payoffs, rollouts, gridworld rules, the taxonomy."""

import numpy as np
import pytest

from bargainlab.games import (
    BLUE,
    RED,
    BargainingCoinGame,
    CoinGame,
    ConstantPolicy,
    JointAction,
    MatrixGame,
    UniformRandomPolicy,
    bos,
    classify_game,
    extreme_bos,
    iasymbos,
    ipd,
    make_environment,
    pure_coordination,
    pure_nash_equilibria,
    rollout,
)
from bargainlab.games.grid import KIND_COOPERATION, KIND_DISAGREEMENT


class TestMatrixGames:
    def test_iasymbos_payoffs(self):
        g = iasymbos()
        assert g.reward_pair(0, 0) == (4, 1)   # (B, B)
        assert g.reward_pair(0, 1) == (0, 0)   # (B, S)
        assert g.reward_pair(1, 0) == (0, 0)
        assert g.reward_pair(1, 1) == (2, 2)

    def test_step_returns_rewards_and_state(self):
        g = iasymbos()
        state = g.initial_state()
        nxt, r, obs = g.step(state, JointAction(0, 0), None)
        assert r == (4, 1)
        assert nxt.prev == (0, 0)
        assert obs == (nxt, nxt)

    def test_invalid_action_rejected(self):
        g = iasymbos()
        with pytest.raises(ValueError, match="out of range"):
            g.step(g.initial_state(), JointAction(0, 5), None)

    def test_ipd_structure(self):
        g = ipd()
        p = g.payoffs
        # defection strictly dominates cooperation for both players
        assert p[1, 0, 0] > p[0, 0, 0] and p[1, 1, 0] > p[0, 1, 0]
        assert p[0, 1, 1] > p[0, 0, 1] and p[1, 1, 1] > p[1, 0, 1]
        # mutual cooperation Pareto-dominates mutual defection
        assert p[0, 0, 0] > p[1, 1, 0] and p[0, 0, 1] > p[1, 1, 1]
        assert g.reward_pair(1, 1) == (-3, -3)

    def test_ipd_rejects_bad_orderings(self):
        with pytest.raises(ValueError, match="T > R > P > S"):
            ipd(t=-5.0)

    def test_payoffs_complete_and_finite(self):
        with pytest.raises(ValueError, match="finite"):
            MatrixGame("bad", [[(np.inf, 0), (0, 0)], [(0, 0), (1, 1)]])

    def test_make_environment_overrides(self):
        g = make_environment("ipd", gamma=0.9, p=-2.0)
        assert g.gamma == 0.9
        assert g.reward_pair(1, 1) == (-2, -2)


class TestRollout:
    def test_constant_bb_rewards(self):
        g = iasymbos()
        traj = rollout(g, (ConstantPolicy(0), ConstantPolicy(0)), 20, seed=0)
        assert all(r == (4, 1) for (_, _, r) in traj.steps)

    def test_miscoordination_rewards(self):
        g = iasymbos()
        traj = rollout(g, (ConstantPolicy(0), ConstantPolicy(1)), 20, seed=0)
        assert all(r == (0, 0) for (_, _, r) in traj.steps)

    def test_same_seed_identical(self):
        g = iasymbos()
        pols = lambda: (UniformRandomPolicy(2), UniformRandomPolicy(2))
        t1 = rollout(g, pols(), 50, seed=123)
        t2 = rollout(g, pols(), 50, seed=123)
        assert [(a.a1, a.a2) for (_, a, _) in t1.steps] == \
               [(a.a1, a.a2) for (_, a, _) in t2.steps]

    def test_length_validated(self):
        with pytest.raises(ValueError, match=">= 1"):
            rollout(iasymbos(), (ConstantPolicy(0), ConstantPolicy(0)), 0, seed=0)

    def test_discounted_value_of_constant_stream(self):
        # long enough that gamma^T < 1e-12
        g = iasymbos()
        traj = rollout(g, (ConstantPolicy(0), ConstantPolicy(0)), 700, seed=0)
        v1, v2 = traj.discounted_values()
        assert abs(v1 - 4 / (1 - 0.96)) < 1e-9
        assert abs(v2 - 1 / (1 - 0.96)) < 1e-9


class TestClassify:
    def test_pure_coordination(self):
        c = classify_game(pure_coordination())
        assert c.is_coordination_problem
        assert not c.is_mixed_motive
        assert not c.is_bargaining_problem
        assert c.is_symmetric

    def test_bos_symmetric_bp(self):
        c = classify_game(bos())
        assert c.is_bargaining_problem
        assert c.is_symmetric

    def test_iasymbos_asymmetric_bp(self):
        c = classify_game(iasymbos())
        assert c.is_bargaining_problem
        assert c.is_mixed_motive
        assert not c.is_symmetric

    def test_ipd_not_coordination(self):
        c = classify_game(ipd())
        assert c.is_mixed_motive
        assert not c.is_coordination_problem
        assert not c.is_bargaining_problem

    def test_extreme_bos_is_bp(self):
        c = classify_game(extreme_bos())
        assert c.is_bargaining_problem
        assert not c.is_symmetric

    def test_nash_enumeration(self):
        assert pure_nash_equilibria(iasymbos()) == [(0, 0), (1, 1)]
        assert pure_nash_equilibria(ipd()) == [(1, 1)]

    def test_swap_invariance(self):
        for g in (iasymbos(), bos(), ipd(), extreme_bos(), pure_coordination()):
            c = classify_game(g)
            cs = classify_game(g.swap_players())
            assert c.is_symmetric == cs.is_symmetric
            assert c.is_bargaining_problem == cs.is_bargaining_problem


class TestCoinGame:
    def test_red_steals_blue_coin(self):
        env = CoinGame()
        rng = np.random.default_rng(0)
        state = env.initial_state(rng)
        coin = state.coins[0]
        # force a blue coin next to red for a deterministic check
        from bargainlab.games import Coin, GridState
        from bargainlab.games.grid import KIND_PLAIN

        state = GridState(p1=0, p2=8, coins=(Coin(KIND_PLAIN, BLUE, 1),), t=0)
        nxt, r, _ = env.step(state, JointAction(3, 0), rng)  # red moves right onto it
        assert r == (1.0, -2.0)

    def test_simultaneous_pickup_rule(self):
        env = CoinGame()
        rng = np.random.default_rng(0)
        from bargainlab.games import Coin, GridState
        from bargainlab.games.grid import KIND_PLAIN

        # red at 0, blue at 2, red coin at 1: both step onto it
        state = GridState(p1=0, p2=2, coins=(Coin(KIND_PLAIN, RED, 1),), t=0)
        nxt, r, _ = env.step(state, JointAction(3, 2), rng)
        # both pick up (+1 each); blue took red's coin so red is docked 2
        assert r == (1.0 - 2.0, 1.0)

    def test_coin_respawns_off_players(self):
        env = CoinGame()
        rng = np.random.default_rng(1)
        state = env.initial_state(rng)
        for _ in range(200):
            a = JointAction(int(rng.integers(4)), int(rng.integers(4)))
            state, _, _ = env.step(state, a, rng)
            coin = state.coins[0]
            assert coin.cell not in (state.p1, state.p2)

    def test_positions_within_bounds(self):
        env = CoinGame()
        rng = np.random.default_rng(2)
        state = env.initial_state(rng)
        for _ in range(100):
            a = JointAction(int(rng.integers(4)), int(rng.integers(4)))
            state, _, _ = env.step(state, a, rng)
            assert 0 <= state.p1 < env.n_cells
            assert 0 <= state.p2 < env.n_cells

    def test_toroidal_movement(self):
        env = CoinGame()
        assert env.move(0, 0) == 6   # up from the top row wraps
        assert env.move(0, 2) == 2   # left from the first column wraps
        assert env.move(8, 1) == 2   # down from the bottom row wraps


class TestBargainingCoinGame:
    def test_conservation_one_of_each_coin(self, abcg_env):
        env = abcg_env
        rng = np.random.default_rng(3)
        state = env.initial_state(rng)
        for _ in range(500):
            a = JointAction(int(rng.integers(4)), int(rng.integers(4)))
            state, _, _ = env.step(state, a, rng)
            kinds = sorted(c.kind for c in state.coins)
            assert kinds == [KIND_COOPERATION, KIND_DISAGREEMENT]
            assert state.coins[0].cell != state.coins[1].cell

    def test_coop_coin_requires_both_players(self):
        env = BargainingCoinGame()
        rng = np.random.default_rng(0)
        from bargainlab.games import Coin, GridState

        coins = (Coin(KIND_COOPERATION, None, 1), Coin(KIND_DISAGREEMENT, BLUE, 5))
        # only red arrives on the cooperation coin: nothing happens
        state = GridState(p1=0, p2=6, coins=coins, t=0)
        nxt, r, _ = env.step(state, JointAction(3, 2), rng)
        assert r == (0.0, 0.0)
        assert nxt.coin_of_kind(KIND_COOPERATION).cell == 1

    def test_joint_coop_consumption_pays_asymmetric(self):
        env = BargainingCoinGame()
        rng = np.random.default_rng(0)
        from bargainlab.games import Coin, GridState

        coins = (Coin(KIND_COOPERATION, None, 1), Coin(KIND_DISAGREEMENT, BLUE, 5))
        state = GridState(p1=0, p2=2, coins=coins, t=0)
        nxt, r, _ = env.step(state, JointAction(3, 2), rng)
        assert r == (3.0, 1.0)

    def test_off_color_player_cannot_consume_dc(self):
        env = BargainingCoinGame()
        rng = np.random.default_rng(0)
        from bargainlab.games import Coin, GridState

        coins = (Coin(KIND_COOPERATION, None, 8), Coin(KIND_DISAGREEMENT, BLUE, 1))
        state = GridState(p1=0, p2=4, coins=coins, t=0)
        nxt, r, _ = env.step(state, JointAction(3, 1), rng)  # red steps onto blue DC
        assert r == (0.0, 0.0)
        assert nxt.coin_of_kind(KIND_DISAGREEMENT).cell == 1  # still there

    def test_owner_consumes_dc(self):
        env = BargainingCoinGame()
        rng = np.random.default_rng(0)
        from bargainlab.games import Coin, GridState

        coins = (Coin(KIND_COOPERATION, None, 8), Coin(KIND_DISAGREEMENT, BLUE, 5))
        state = GridState(p1=0, p2=4, coins=coins, t=0)
        nxt, r, _ = env.step(state, JointAction(0, 3), rng)  # blue moves right onto it
        assert r == (0.0, env.dc_reward)

    def test_timeout_relocates_coins(self):
        env = BargainingCoinGame(coin_timeout=3)
        rng = np.random.default_rng(4)
        state = env.initial_state(rng)
        seen_relocation = False
        for _ in range(30):
            # both players oscillate without consuming
            before = tuple((c.kind, c.cell) for c in state.coins)
            a = JointAction(0, 0)
            state, r, _ = env.step(state, a, rng)
            if r == (0.0, 0.0) and tuple((c.kind, c.cell) for c in state.coins) != before:
                seen_relocation = True
        assert seen_relocation

    def test_determinism(self, abcg_env):
        env = abcg_env
        t1 = rollout(env, (UniformRandomPolicy(4), UniformRandomPolicy(4)), 80, seed=9)
        t2 = rollout(env, (UniformRandomPolicy(4), UniformRandomPolicy(4)), 80, seed=9)
        assert np.array_equal(t1.rewards(), t2.rewards())
        assert [s for (s, _, _) in t1.steps] == [s for (s, _, _) in t2.steps]
