"""Conf test."""
import numpy as np
import pytest


@pytest.fixture
def rng():
    """Seeded generator for tests that draw random sequences."""
    return np.random.Generator(np.random.PCG64(20231019))
