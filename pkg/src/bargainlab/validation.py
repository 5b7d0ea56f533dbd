"""Input-validation helpers shared across the package."""

from __future__ import annotations

import numpy as np


def as_rng(seed) -> np.random.Generator:
    """Coerce an int seed, Generator, or None into a numpy Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def check_gamma(gamma: float) -> float:
    gamma = float(gamma)
    if not (0.0 <= gamma < 1.0):
        raise ValueError(f"discount factor must lie in [0, 1), got {gamma}")
    return gamma


def check_action(action: int, n_actions: int, player: int) -> int:
    action = int(action)
    if not (0 <= action < n_actions):
        raise ValueError(
            f"action {action} out of range for player {player} "
            f"(valid: 0..{n_actions - 1})"
        )
    return action


def check_payoff_array(payoffs) -> np.ndarray:
    """Validate an (N, N, 2) payoff tensor: complete and finite."""
    arr = np.asarray(payoffs, dtype=float)
    if arr.ndim != 3 or arr.shape[0] != arr.shape[1] or arr.shape[2] != 2:
        raise ValueError(f"payoffs must have shape (N, N, 2), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("payoffs must be finite for both players")
    return arr


def check_probability_rows(rows: np.ndarray, atol: float = 1e-12) -> np.ndarray:
    """Validate that each row is a probability vector."""
    rows = np.asarray(rows, dtype=float)
    if np.any(rows < -atol):
        raise ValueError("probability rows must be non-negative")
    sums = rows.sum(axis=-1)
    if not np.allclose(sums, 1.0, atol=atol, rtol=0.0):
        raise ValueError(f"probability rows must sum to 1, got sums {sums}")
    return rows
