"""
Shared pytest fixtures for the PM-Lab backend
"""

import os
import sys

import numpy as np
import pytest

# Add backend to path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from energy_core import LatticeField  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def random_field(rng):
    def make(n: int = 64, scale: float = 0.05) -> LatticeField:
        return LatticeField(n=n, values=np.cumsum(rng.normal(0.0, scale, n + 1)))
    return make


@pytest.fixture
def unit_step():
    def make(n: int, index: int = None) -> LatticeField:
        index = n // 2 if index is None else index
        values = np.zeros(n + 1)
        values[index + 1:] = 1.0
        return LatticeField(n=n, values=values)
    return make
