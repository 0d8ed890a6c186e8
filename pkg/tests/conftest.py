import numpy as np
import pytest

from src.dynamics.costs import QuadCost
from src.dynamics.linear_system import LinearSystem
from src.harness.config import parse_config


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def two_agent_system():
    """Stable 2-state plant, one scalar actuator per agent."""
    A = np.array([[0.6, 0.2], [0.0, 0.5]])
    return LinearSystem(A, (np.array([[1.0], [0.0]]), np.array([[0.3], [1.0]])))


@pytest.fixture
def nilpotent_system():
    """A^2 = 0, so a horizon-2 Markov operator is exact."""
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    return LinearSystem(A, (np.array([[1.0], [0.0]]), np.array([[0.0], [1.0]])))


@pytest.fixture
def unit_cost():
    return QuadCost.identity(2, 2)


@pytest.fixture
def pair_config():
    def build(text: str = "", **overrides):
        lines = [text, "T = 200", "seed = 7"] + [f"{k} = {v}" for k, v in overrides.items()]
        return parse_config("\n".join(lines), scenario="pair")

    return build
