"""Shared fixtures for the nashflow test suite."""
from __future__ import annotations

import numpy as np
import pytest

from nashflow import rotation_game, quadratic_two_player


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def rotation():
    return rotation_game()


@pytest.fixture
def quadratic2():
    return quadratic_two_player()
