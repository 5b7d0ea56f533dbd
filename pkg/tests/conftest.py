"""Shared fixtures; expensive trained artifacts are session-scoped."""

import numpy as np
import pytest

from bargainlab.amtft import AmTFTConfig, train_amtft
from bargainlab.games import BargainingCoinGame, CoinGame, iasymbos, ipd
from bargainlab.scoring import welfare_spec


@pytest.fixture(scope="session")
def iasymbos_env():
    return iasymbos()


@pytest.fixture(scope="session")
def ipd_env():
    return ipd()


@pytest.fixture(scope="session")
def abcg_env():
    return BargainingCoinGame()


@pytest.fixture(scope="session")
def coin_env():
    return CoinGame()


@pytest.fixture(scope="session")
def iasymbos_bundles(iasymbos_env):
    """amTFT bundles for both welfare kinds on IAsymBoS (seed 0)."""
    env = iasymbos_env
    return {
        "util": train_amtft(env, welfare_spec(env, "utilitarian"), seed=0),
        "ia": train_amtft(env, welfare_spec(env, "inequity_averse"), seed=0),
    }


@pytest.fixture(scope="session")
def ipd_bundle(ipd_env):
    return train_amtft(ipd_env, welfare_spec(ipd_env, "utilitarian"), seed=0)


ABCG_BETA = 4.0
ABCG_CONFIG = AmTFTConfig(t_debit=0.5, alpha=7.0)


@pytest.fixture(scope="session")
def abcg_bundles(abcg_env):
    """amTFT bundles for ABCG at the calibrated configuration (seed 0)."""
    env = abcg_env
    return {
        "util": train_amtft(env, welfare_spec(env, "utilitarian"),
                            seed=0, config=ABCG_CONFIG),
        "ia": train_amtft(env, welfare_spec(env, "inequity_averse", beta=ABCG_BETA),
                          seed=0, config=ABCG_CONFIG),
    }
