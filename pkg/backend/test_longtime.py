"""
Tests for the plateau scheme, the limit ODE and the jump-density variant
"""

import numpy as np
import pytest
from pydantic import ValidationError

from energy_core import bounded_density, log_density
from errors import SingularityError
from longtime import (
    PlateauConfig,
    gprime_longtime_check,
    limit_ode,
    limit_ode_rhs,
    longtime_comparison,
    scaled_scheme,
    scaled_step,
    time_scaling_check,
)


def plateau(z0: float, eps: float = 1e-4, tau: float = 1e-5, T: float = 0.05, **kw) -> PlateauConfig:
    return PlateauConfig(x0=0.25, x1=0.75, z0=z0, eps=eps, tau=tau, T=T, **kw)


def test_config_validation():
    with pytest.raises(ValidationError):
        PlateauConfig(x0=0.6, x1=0.4, z0=0.3, eps=1e-4, tau=1e-5, T=0.01)
    with pytest.raises(ValidationError):
        plateau(-0.1)
    assert plateau(0.3).lam == pytest.approx(1 / np.log(1e4))


def test_step_examples():
    cfg = plateau(0.45)
    assert scaled_step(0.5, cfg) == 0.5
    assert scaled_step(0.45, cfg) < 0.45
    assert scaled_step(0.55, cfg) > 0.55
    assert scaled_step(0.0, cfg) == 0.0


def test_step_solves_implicit_equation():
    cfg = plateau(0.45)
    z = scaled_step(0.45, cfg)
    eps, big_l = cfg.eps, -np.log(cfg.eps)
    lhs = cfg.gap * (z - 0.45) / cfg.tau
    rhs = -(2 / cfg.lam) * (z / (eps + big_l * z * z) + (z - 1) / (eps + big_l * (z - 1) ** 2))
    assert lhs == pytest.approx(rhs, rel=1e-6)


def test_scheme_examples():
    assert np.all(scaled_scheme(plateau(0.5, T=0.001)).column("z") == 0.5)

    z = scaled_scheme(plateau(0.45)).column("z")
    assert np.all(np.diff(z) < 0)

    zero = scaled_scheme(plateau(0.0, T=0.001))
    assert np.all(zero.column("z") == 0.0)


def test_mirror_symmetry():
    low = scaled_scheme(plateau(0.45, T=0.01)).column("z")
    high = scaled_scheme(plateau(0.55, T=0.01)).column("z")
    assert np.max(np.abs(high - (1.0 - low))) <= 1e-12

    ode_low = limit_ode(plateau(0.45, T=0.01))["z"]
    ode_high = limit_ode(plateau(0.55, T=0.01))["z"]
    assert np.max(np.abs(ode_high - (1.0 - ode_low))) <= 1e-12


def test_limit_ode_examples():
    assert limit_ode_rhs(0.45, 0.5) == pytest.approx(-1.6162, abs=1e-4)
    assert np.all(limit_ode(plateau(0.5, T=0.01))["z"] == 0.5)
    z = limit_ode(plateau(0.45))["z"]
    assert np.all(np.diff(z) < 0)
    with pytest.raises(SingularityError):
        limit_ode(plateau(5e-5))


def test_ode_halts_at_guard():
    out = limit_ode(plateau(0.45, tau=1e-4, T=0.2))
    assert out["halted"]
    assert out["z"][-1] > 1e-4
    assert out["times"].size == out["z"].size


def test_comparison_improves_with_refinement():
    coarse = longtime_comparison(plateau(0.45, eps=1e-2, tau=1e-4))
    fine = longtime_comparison(plateau(0.45, eps=1e-6, tau=1e-6))
    assert fine["sup_error"] < coarse["sup_error"]
    assert fine["sup_error"] <= 0.05
    assert longtime_comparison(plateau(0.5, T=0.01))["sup_error"] <= 1e-13


def test_time_scaling_identity():
    report = time_scaling_check(plateau(0.45, T=0.005))
    assert report["compared_steps"] > 400
    assert report["max_difference"] == 0.0


def test_jump_density_variant():
    cfg = plateau(0.45, eps=1e-6, tau=1e-5)
    good = gprime_longtime_check(log_density(), cfg)
    assert good["slope_ok"] and good["matches"]

    bad = gprime_longtime_check(bounded_density(), cfg)
    assert not bad["slope_ok"]
    assert bad["diverges"]

    still = gprime_longtime_check(bounded_density(), plateau(0.5, eps=1e-6, tau=1e-5, T=0.005))
    assert still["sup_error"] == 0.0
