import numpy as np
import pytest

from wpIsac.model.Scenario import SystemParams, DEFAULT_SEED, generate_scenario, scenario_from_geometry
from wpIsac.model.Sensing import build_tables


@pytest.fixture(scope="session")
def default_scenario():
    """Reference instance: 10 users, 10 targets, seed 7."""
    return generate_scenario(DEFAULT_SEED)


@pytest.fixture(scope="session")
def default_tables(default_scenario):
    return build_tables(default_scenario)


@pytest.fixture
def single_user_scenario():
    # Localization binds here: low powers would maximize the rate
    params = SystemParams(num_users=1, num_targets=1)
    return scenario_from_geometry(params, user_pos=[[3.0, 2.0]], target_pos=[[-1.0, 4.0]], seed=11)


@pytest.fixture
def two_user_scenario():
    params = SystemParams(num_users=2, num_targets=1)
    return scenario_from_geometry(params, user_pos=[[4.0, 1.0], [-2.0, 5.0]], target_pos=[[1.0, -3.0]], seed=3)


@pytest.fixture
def scenario_factory():
    """``make(seed, num_users, num_targets, **params)`` for random instances."""
    def make(seed, num_users=3, num_targets=2, **params):
        return generate_scenario(seed, SystemParams(num_users=num_users, num_targets=num_targets, **params))
    return make


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
