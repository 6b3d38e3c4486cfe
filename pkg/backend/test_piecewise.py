"""
Tests for piecewise-H1 functions and the Mumford-Shah energy
"""

import math

import numpy as np
import pytest

from errors import DirichletEnergyError
from piecewise import PiecewiseH1Function, ms_energy


def test_smooth_piece_without_derivative():
    u = PiecewiseH1Function.smooth(lambda x: np.sin(math.pi * x))
    assert ms_energy(u) == pytest.approx(math.pi ** 2 / 2.0, rel=1e-8)


def test_kinked_piece_without_derivative():
    u = PiecewiseH1Function.smooth(lambda x: np.abs(x - 0.5))
    assert ms_energy(u) == pytest.approx(1.0, rel=1e-10)


def test_step_counts_one_jump():
    assert ms_energy(PiecewiseH1Function.step(0.5, height=3.0)) == pytest.approx(1.0)


def test_unbounded_dirichlet_energy_is_rejected():
    root = lambda x: np.sqrt(np.abs(x))
    with pytest.raises(DirichletEnergyError):
        ms_energy(PiecewiseH1Function.smooth(root))
    with pytest.raises(DirichletEnergyError):
        ms_energy(PiecewiseH1Function.smooth(root, lambda x: 0.5 / np.sqrt(np.abs(x))))


def test_singular_but_square_integrable_derivative():
    # u' ~ x^(-1/4) is square-integrable; the interpolant converges slowly
    u = PiecewiseH1Function.smooth(lambda x: np.abs(x) ** 0.75)
    assert ms_energy(u) == pytest.approx(0.5625 / 0.5, rel=1e-2)
