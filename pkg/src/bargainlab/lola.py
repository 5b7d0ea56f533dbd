"""Opponent-shaping gradient learning on iterated matrix games, in closed form.

Policies are memory-1: a softmax over the player's N actions conditioned on
the previous joint action (with separate logits for the opening move). A
policy pair induces a Markov chain over the N^2 previous-joint-action states,

    p0[s]    = pi1_init[a1] * pi2_init[a2],            s = (a1, a2)
    P[s, s'] = pi1[s][b1]   * pi2[s][b2],              s' = (b1, b2)
    r_i[s]   = stage payoff of joint action s,

so each player's discounted value is the linear solve
V_i = p0 . (I - gamma P)^{-1} r_i. Because p0 and P are explicit smooth
functions of the logits, first derivatives and the cross second-derivative
blocks of V_i are also available in closed form (see `value_derivatives`);
the shaping update adds to plain gradient ascent a correction through the
opponent's anticipated parameter change:

    theta1 += delta * dV1/dtheta1
            + delta * eta * [dV1/dtheta2]^T d^2 V2 / dtheta2 dtheta1

applied simultaneously for both players.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .games.matrix import MatrixGame, MatrixState
from .validation import as_rng, check_gamma, check_probability_rows


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _softmax_jacobian(probs: np.ndarray) -> np.ndarray:
    """d probs[a] / d logit[z] = probs[a] * (delta_az - probs[z])."""
    return np.diag(probs) - np.outer(probs, probs)


@dataclass
class Memory1Policy:
    """Softmax policy over N actions conditioned on the previous joint action.

    ``conditional_logits[s]`` is the logit row for previous joint action
    s = a1 * N + a2; ``initial_logits`` covers the opening move.
    """

    initial_logits: np.ndarray
    conditional_logits: np.ndarray

    def __post_init__(self):
        self.initial_logits = np.asarray(self.initial_logits, dtype=float)
        self.conditional_logits = np.asarray(self.conditional_logits, dtype=float)
        n = self.initial_logits.shape[0]
        if self.conditional_logits.shape != (n * n, n):
            raise ValueError(
                f"conditional_logits must have shape ({n * n}, {n}), "
                f"got {self.conditional_logits.shape}")

    @property
    def n_actions(self) -> int:
        return self.initial_logits.shape[0]

    def initial_probs(self) -> np.ndarray:
        return check_probability_rows(_softmax(self.initial_logits))

    def conditional_probs(self) -> np.ndarray:
        return check_probability_rows(_softmax(self.conditional_logits))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.initial_logits, self.conditional_logits.ravel()])

    @staticmethod
    def from_vector(theta: np.ndarray, n_actions: int) -> "Memory1Policy":
        theta = np.asarray(theta, dtype=float)
        n = n_actions
        if theta.shape != (n + n ** 3,):
            raise ValueError(f"parameter vector must have length {n + n ** 3}")
        return Memory1Policy(theta[:n].copy(), theta[n:].reshape(n * n, n).copy())

    def to_dict(self) -> dict:
        return {
            "initial_logits": self.initial_logits.tolist(),
            "conditional_logits": self.conditional_logits.tolist(),
        }

    @staticmethod
    def from_dict(data: dict) -> "Memory1Policy":
        return Memory1Policy(np.asarray(data["initial_logits"], dtype=float),
                             np.asarray(data["conditional_logits"], dtype=float))


@dataclass
class Memory1Runner:
    """Adapter that plays a Memory1Policy inside environment rollouts."""

    policy: Memory1Policy

    def act(self, state: MatrixState, rng: np.random.Generator) -> int:
        n = self.policy.n_actions
        if state.prev is None:
            probs = self.policy.initial_probs()
        else:
            s = state.prev[0] * n + state.prev[1]
            probs = self.policy.conditional_probs()[s]
        return int(rng.choice(n, p=probs))

    def reset(self) -> None:
        pass


@dataclass
class InducedChain:
    """The joint-action Markov chain induced by a memory-1 policy pair."""

    p0: np.ndarray
    P: np.ndarray
    r1: np.ndarray
    r2: np.ndarray

    def __post_init__(self):
        check_probability_rows(self.p0)
        check_probability_rows(self.P)


def induced_chain(policy1: Memory1Policy, policy2: Memory1Policy,
                  game: MatrixGame) -> InducedChain:
    n = game.n_actions
    if policy1.n_actions != n or policy2.n_actions != n:
        raise ValueError("policy action counts must match the game")
    p0 = np.outer(policy1.initial_probs(), policy2.initial_probs()).ravel()
    c1, c2 = policy1.conditional_probs(), policy2.conditional_probs()
    P = np.einsum("sb,sc->sbc", c1, c2).reshape(n * n, n * n)
    r1 = game.payoffs[:, :, 0].ravel()
    r2 = game.payoffs[:, :, 1].ravel()
    return InducedChain(p0=p0, P=P, r1=r1.astype(float), r2=r2.astype(float))


def exact_value(policy1: Memory1Policy, policy2: Memory1Policy,
                game: MatrixGame, gamma: float | None = None) -> tuple[float, float]:
    """Discounted value pair via the linear solve V_i = p0 . (I - gamma P)^-1 r_i."""
    g = game.gamma if gamma is None else check_gamma(gamma)
    chain = induced_chain(policy1, policy2, game)
    m = np.eye(len(chain.p0)) - g * chain.P
    u1 = np.linalg.solve(m, chain.r1)
    u2 = np.linalg.solve(m, chain.r2)
    v1, v2 = float(chain.p0 @ u1), float(chain.p0 @ u2)
    if not (np.isfinite(v1) and np.isfinite(v2)):
        raise ArithmeticError("value solve produced non-finite values")
    return v1, v2


def _policy_tensors(policy: Memory1Policy):
    """Probabilities and their Jacobians wrt the flattened parameter vector.

    Returns (pi_init, pi_cond, Dinit, Dcond) where
    Dinit[a, k] = d pi_init[a] / d theta_k and
    Dcond[s, b, k] = d pi_cond[s, b] / d theta_k, with theta laid out as
    [initial logits, conditional logits row-major].
    """
    n = policy.n_actions
    m = n + n ** 3
    pi_init = policy.initial_probs()
    pi_cond = policy.conditional_probs()
    d_init = np.zeros((n, m))
    d_init[:, :n] = _softmax_jacobian(pi_init)
    d_cond = np.zeros((n * n, n, m))
    for s in range(n * n):
        cols = slice(n + s * n, n + (s + 1) * n)
        d_cond[s, :, cols] = _softmax_jacobian(pi_cond[s])
    return pi_init, pi_cond, d_init, d_cond


def value_derivatives(policy1: Memory1Policy, policy2: Memory1Policy,
                      game: MatrixGame, gamma: float | None = None) -> dict:
    """First and cross-second derivatives of both values wrt both parameter vectors.

    Returns a dict with gradients ``dV{i}_d{j}`` (shape m_j) and cross blocks
    ``d2V{i}_d1_d2`` of shape (m_1, m_2) holding d^2 V_i / d theta1 d theta2.
    All derivatives are analytic; the test suite gates them against central
    finite differences.
    """
    g = game.gamma if gamma is None else check_gamma(gamma)
    n = game.n_actions
    chain = induced_chain(policy1, policy2, game)
    m_mat = np.eye(n * n) - g * chain.P

    pi1_init, pi1_cond, d1_init, d1_cond = _policy_tensors(policy1)
    pi2_init, pi2_cond, d2_init, d2_cond = _policy_tensors(policy2)
    m1 = d1_init.shape[1]
    m2 = d2_init.shape[1]

    # dp0/dtheta and dP/dtheta for each player; states s = (a1, a2).
    dp0_1 = np.einsum("ak,b->abk", d1_init, pi2_init).reshape(n * n, m1)
    dp0_2 = np.einsum("a,bk->abk", pi1_init, d2_init).reshape(n * n, m2)
    dP_1 = np.einsum("sbk,sc->sbck", d1_cond, pi2_cond).reshape(n * n, n * n, m1)
    dP_2 = np.einsum("sb,sck->sbck", pi1_cond, d2_cond).reshape(n * n, n * n, m2)
    d2p0 = np.einsum("ak,bl->abkl", d1_init, d2_init).reshape(n * n, m1, m2)
    d2P = np.einsum("sbk,scl->sbckl", d1_cond, d2_cond).reshape(n * n, n * n, m1, m2)

    q = np.linalg.solve(m_mat.T, chain.p0)
    out = {}
    for i, r in ((1, chain.r1), (2, chain.r2)):
        u = np.linalg.solve(m_mat, r)
        out[f"dV{i}_d1"] = dp0_1.T @ u + g * np.einsum("s,stk,t->k", q, dP_1, u)
        out[f"dV{i}_d2"] = dp0_2.T @ u + g * np.einsum("s,stl,t->l", q, dP_2, u)
        a1 = np.linalg.solve(m_mat, np.einsum("stk,t->sk", dP_1, u))
        a2 = np.linalg.solve(m_mat, np.einsum("stl,t->sl", dP_2, u))
        cross = (
            np.einsum("skl,s->kl", d2p0, u)
            + g * np.einsum("sk,sl->kl", dp0_1, a2)
            + g * np.einsum("sl,sk->kl", dp0_2, a1)
            + g * np.einsum("s,stkl,t->kl", q, d2P, u)
            + g * g * np.einsum("s,stk,tl->kl", q, dP_1, a2)
            + g * g * np.einsum("s,stl,tk->kl", q, dP_2, a1)
        )
        out[f"d2V{i}_d1_d2"] = cross
    return out


def lola_step(theta1: np.ndarray, theta2: np.ndarray, game: MatrixGame,
              gamma: float | None = None, delta: float = 1.0,
              eta: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """One simultaneous shaping update of both parameter vectors."""
    if delta <= 0:
        raise ValueError(f"step size delta must be > 0, got {delta}")
    if eta < 0:
        raise ValueError(f"shaping coefficient eta must be >= 0, got {eta}")
    n = game.n_actions
    p1 = Memory1Policy.from_vector(theta1, n)
    p2 = Memory1Policy.from_vector(theta2, n)
    d = value_derivatives(p1, p2, game, gamma)
    for key, val in d.items():
        if not np.all(np.isfinite(val)):
            raise ArithmeticError(f"non-finite derivative {key}; aborting the run")
    # Shaping terms contract the own-value gradient wrt the opponent's
    # parameters against the opponent's cross Hessian of its own value.
    new1 = theta1 + delta * d["dV1_d1"] + delta * eta * (d["d2V2_d1_d2"] @ d["dV1_d2"])
    new2 = theta2 + delta * d["dV2_d2"] + delta * eta * (d["d2V1_d1_d2"].T @ d["dV2_d1"])
    return new1, new2


def train_lola(game: MatrixGame, gamma: float | None = None, delta: float = 1.0,
               eta: float = 1.0, iterations: int = 2000, tol: float = 1e-6,
               seed=0) -> tuple[tuple[Memory1Policy, Memory1Policy], list[tuple[float, float]]]:
    """Run the shaping learner from seeded standard-normal logits.

    Returns the final policy pair and the per-iteration value trace
    (including the initial point). Stops when the largest parameter change
    falls below ``tol`` or after ``iterations`` updates.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    rng = as_rng(seed)
    n = game.n_actions
    m = n + n ** 3
    theta1 = rng.standard_normal(m)
    theta2 = rng.standard_normal(m)
    trace = []
    for _ in range(iterations):
        p1 = Memory1Policy.from_vector(theta1, n)
        p2 = Memory1Policy.from_vector(theta2, n)
        trace.append(exact_value(p1, p2, game, gamma))
        if delta == 0.0:
            continue
        new1, new2 = lola_step(theta1, theta2, game, gamma, delta, eta)
        change = max(np.abs(new1 - theta1).max(), np.abs(new2 - theta2).max())
        theta1, theta2 = new1, new2
        if change < tol:
            break
    pair = (Memory1Policy.from_vector(theta1, n), Memory1Policy.from_vector(theta2, n))
    trace.append(exact_value(pair[0], pair[1], game, gamma))
    return pair, trace


class LolaExact(BaseEstimator):
    """Estimator wrapper around `train_lola` with scikit-learn conventions.

    Parameters
    ----------
    delta : float, learning rate of the plain gradient term.
    eta : float, weight of the opponent-shaping term.
    gamma : float or None, discount; None uses the game's own.
    iterations : int, update cap.
    tol : float, parameter-change convergence threshold.
    seed : int, initial-logit seed.
    """

    def __init__(self, delta: float = 1.0, eta: float = 1.0, gamma: float | None = None,
                 iterations: int = 2000, tol: float = 1e-6, seed: int = 0):
        self.delta = delta
        self.eta = eta
        self.gamma = gamma
        self.iterations = iterations
        self.tol = tol
        self.seed = seed

    def fit(self, game: MatrixGame, y=None):
        (p1, p2), trace = train_lola(game, self.gamma, self.delta, self.eta,
                                     self.iterations, self.tol, self.seed)
        self.policy1_ = p1
        self.policy2_ = p2
        self.values_trace_ = trace
        self.values_ = trace[-1]
        self.n_iter_ = len(trace) - 1
        return self

    def predict(self, game: MatrixGame) -> tuple[float, float]:
        """Exact self-play value pair of the fitted policies on `game`."""
        return exact_value(self.policy1_, self.policy2_, game, self.gamma)
