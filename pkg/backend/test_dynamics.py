"""
Tests for minimizing movements and their diagnostics
"""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from dynamics import (
    MMConfig,
    flux_diagnostics,
    flux_field,
    holder_estimate,
    holder_refinement_check,
    jump_persistence_check,
    jump_set_trace,
    l2_distance,
    minimizing_movement,
    optimality_bound,
    prox_residual,
    prox_step,
    prox_uniqueness_check,
)
from energy_core import LatticeField, lattice_gradient, pm_energy, sample_field
from errors import SolverDivergence
from outputs import read_state_dump
from piecewise import PiecewiseH1Function


def stable_config(n: int, T: float, **kw) -> MMConfig:
    eps = 1.0 / n
    return MMConfig(eps=eps, tau=eps * eps / 8.0, T=T, **kw)


def step_plus_cosine(n: int) -> LatticeField:
    u = PiecewiseH1Function.from_callables(
        [0.5], [lambda x: np.cos(2 * np.pi * x), lambda x: 3.0 + np.cos(2 * np.pi * x)]
    )
    return sample_field(u, n)


# ============================================================================
# CONFIG AND SINGLE STEPS
# ============================================================================

def test_stability_condition_enforced():
    with pytest.raises(ValidationError):
        MMConfig(eps=0.01, tau=3e-5, T=1e-3)
    cfg = MMConfig(eps=0.01, tau=5e-5, T=1e-3, allow_unstable=True)
    assert cfg.lipschitz == pytest.approx(2.0)
    assert not cfg.stable


def test_prox_keeps_constants():
    cfg = stable_config(50, 1e-3)
    prev = LatticeField.constant(50, 0.7)
    out = prox_step(prev, cfg)
    assert np.array_equal(out.values, prev.values)


def test_prox_relaxes_linear_profile():
    cfg = stable_config(100, 1e-3)
    prev = LatticeField.linear(100, 1.0)
    out = prox_step(prev, cfg)
    assert pm_energy(out) < pm_energy(prev)
    assert np.ptp(out.values) < np.ptp(prev.values)


def test_prox_dissipation_and_optimality(random_field):
    cfg = stable_config(64, 1e-3)
    prev = random_field(64, 0.1)
    out = prox_step(prev, cfg)
    dissipation = np.sum((out.values - prev.values) ** 2) * cfg.eps / (2 * cfg.tau)
    assert pm_energy(out) + dissipation <= pm_energy(prev) + 1e-12

    residual = out.values - prev.values + cfg.tau / cfg.eps * lattice_gradient(out.values, cfg.eps)
    assert np.max(np.abs(residual)) <= cfg.solver_tol

    phi = flux_field(out)
    interior = out.values[1:-1] - prev.values[1:-1]
    assert np.allclose(interior, cfg.tau / cfg.eps * (phi[1:] - phi[:-1]), rtol=0, atol=1e-11)
    assert math.isclose(np.sum(out.values), np.sum(prev.values), rel_tol=0, abs_tol=1e-10)


def test_prox_stationarity_without_scaling(random_field):
    for n in (64, 200):
        cfg = stable_config(n, 1e-3)
        prev = random_field(n, 0.1)
        out = prox_step(prev, cfg)
        residual = cfg.eps / cfg.tau * (out.values - prev.values) + lattice_gradient(out.values, cfg.eps)
        assert np.allclose(residual, prox_residual(prev.values, out.values, cfg), rtol=0, atol=1e-12)
        assert np.max(np.abs(residual)) <= optimality_bound(out.values, cfg)
        assert np.max(np.abs(residual)) <= 1e-8


def test_prox_step_rejects_unconverged_stationarity(random_field, monkeypatch):
    import dynamics
    monkeypatch.setattr(dynamics, "optimality_bound", lambda values, cfg: 0.0)
    with pytest.raises(SolverDivergence):
        prox_step(random_field(64, 0.1), stable_config(64, 1e-3))


def test_prox_minimizer_is_unique(random_field):
    report = prox_uniqueness_check(random_field(64, 0.3), stable_config(64, 1e-3), seed=7)
    assert report["unique"]


# ============================================================================
# TRACES
# ============================================================================

def test_constant_trace():
    cfg = stable_config(40, 20 * (1 / 40) ** 2 / 8)
    trace = minimizing_movement(LatticeField.constant(40, 2.0), cfg)
    assert trace.steps == cfg.steps + 1
    assert np.all(trace.energy_array() == 0.0)
    assert holder_estimate(trace)["C_measured"] == 0.0


def test_cosine_relaxes_like_heat_flow():
    n, T = 200, 0.01
    cfg = stable_config(n, T)
    trace = minimizing_movement(LatticeField.from_function(lambda x: np.cos(np.pi * x), n), cfg)
    final = trace.final_state
    exact = lambda x: math.exp(-2 * math.pi ** 2 * T) * np.cos(np.pi * x)
    assert l2_distance(final, exact) <= 0.05
    assert np.all(np.diff(trace.energy_array()) <= 1e-12)
    mass = trace.column("mass")
    assert np.max(np.abs(mass - mass[0])) <= 1e-8
    assert not trace.tainted
    assert trace.metadata["fallback_steps"] == 0

    holder = holder_estimate(trace)
    assert math.isfinite(holder["C_measured"])
    assert holder["within_bound"]
    assert trace.column("holder_C_running")[-1] == pytest.approx(holder["C_measured"], rel=1e-12)


def test_states_kept_at_stride():
    cfg = stable_config(32, 0.05, max_recorded_states=10)
    trace = minimizing_movement(LatticeField.from_function(lambda x: x * x, 32), cfg)
    assert len(trace.states) <= 11
    assert trace.states[-1][0] == cfg.steps


def test_random_fields_structural_properties(rng):
    n = 128
    for _ in range(10):
        u0 = LatticeField(n=n, values=rng.uniform(-1.0, 1.0, n + 1))
        trace = minimizing_movement(u0, MMConfig(eps=1 / n, tau=(1 / n) ** 2 / 8, T=200 * (1 / n) ** 2 / 8))
        assert trace.violations == []
        assert jump_set_trace(trace)["holds"]


@pytest.mark.slow
def test_random_fields_structural_properties_full(rng):
    n = 128
    eps = 1 / n
    for _ in range(100):
        u0 = LatticeField(n=n, values=rng.uniform(-1.0, 1.0, n + 1))
        trace = minimizing_movement(u0, MMConfig(eps=eps, tau=eps * eps / 8, T=200 * eps * eps / 8))
        assert trace.violations == []
        report = jump_set_trace(trace)
        assert report["holds"] and report["lipschitz"] == pytest.approx(0.5)


def test_unstable_override_is_reported():
    n = 64
    eps = 1 / n
    cfg = MMConfig(eps=eps, tau=eps * eps / 2, T=20 * eps * eps / 2, allow_unstable=True)
    trace = minimizing_movement(step_plus_cosine(n), cfg)
    assert trace.tainted
    report = jump_set_trace(trace)
    assert not report["condition_held"]
    assert report["lipschitz"] == pytest.approx(2.0)


def test_jump_persists_and_sides_decay():
    n, T = 200, 0.002
    trace = minimizing_movement(step_plus_cosine(n), stable_config(n, T))
    report = jump_persistence_check(trace)
    assert [j["position"] for j in report["jumps"]] == [0.5]
    assert report["holds"]
    assert report["small_jump_sum"] <= report["small_jump_bound"] + 1e-15

    decay = math.exp(-8 * math.pi ** 2 * T)
    final = trace.final_state
    left = l2_distance(final, lambda x: decay * np.cos(2 * np.pi * x), (0.0, 0.5))
    right = l2_distance(final, lambda x: 3.0 + decay * np.cos(2 * np.pi * x), (0.5, 1.0 + 1e-12))
    assert left <= 0.05 and right <= 0.05


def test_jump_lost_between_kept_states_is_caught():
    n, T = 200, 0.002
    trace = minimizing_movement(step_plus_cosine(n), stable_config(n, T))
    kept = {k for k, _ in trace.states}
    between = next(k for k in range(1, trace.steps) if k not in kept)
    trace.large_springs[between] = ()
    report = jump_persistence_check(trace)
    assert not report["holds"]
    assert report["jumps"][0]["first_missing_step"] == between
    with pytest.raises(ValueError):
        jump_persistence_check(trace, gamma=0.2)


def test_no_jump_run_has_empty_persistence_report():
    n = 100
    trace = minimizing_movement(LatticeField.from_function(lambda x: 0.5 * np.sin(np.pi * x), n), stable_config(n, 1e-3))
    assert all(j == () for j in trace.jump_sets)
    assert jump_persistence_check(trace)["jumps"] == []


def test_holder_refinement():
    n = 50
    report = holder_refinement_check(LatticeField.from_function(lambda x: np.cos(np.pi * x), n), stable_config(n, 5e-3))
    assert report["stable"]


def test_state_dumps(tmp_path):
    n = 20
    cfg = stable_config(n, 10 * (1 / n) ** 2 / 8, dump_every=5)
    trace = minimizing_movement(LatticeField.linear(n, 1.0), cfg, dump_dir=tmp_path)
    files = sorted(tmp_path.glob("state-*.bin"))
    assert [f.name for f in files] == ["state-00000005.bin", "state-00000010.bin"]
    dump = read_state_dump(files[-1])
    assert dump["n"] == n and dump["k"] == 10
    assert dump["eps"] == cfg.eps and dump["tau"] == cfg.tau
    assert np.array_equal(dump["values"], trace.final_state.values)


# ============================================================================
# FLUX
# ============================================================================

def test_flux_examples():
    assert np.all(flux_field(LatticeField.constant(10)) == 0.0)

    n = 10_000
    values = np.zeros(n + 1)
    values[5001:] = 0.5
    report = flux_diagnostics(LatticeField(n=n, values=values), gamma=0.5)
    assert report["jump_flux_bound"] == pytest.approx(0.4343, abs=1e-4)
    assert report["jump_springs"] == 1
    assert report["jump_bound_holds"]

    smooth = flux_diagnostics(LatticeField.linear(1000, 0.8), gamma=0.1)
    assert smooth["jump_springs"] == 0
    assert smooth["smooth_bound_holds"]
    assert smooth["smooth_max_rel_error"] <= 1e-3 * math.log(1e3) * 0.64


@pytest.mark.slow
def test_cosine_acceptance():
    eps, T = 1e-3, 0.01
    cfg = MMConfig(eps=eps, tau=eps * eps / 8, T=T)
    trace = minimizing_movement(LatticeField.from_function(lambda x: np.cos(np.pi * x), 1000), cfg)
    exact = lambda x: math.exp(-2 * math.pi ** 2 * T) * np.cos(np.pi * x)
    assert l2_distance(trace.final_state, exact) <= 1e-2


@pytest.mark.slow
def test_step_plus_cosine_acceptance():
    n, T = 1000, 0.01
    trace = minimizing_movement(step_plus_cosine(n), stable_config(n, T))
    report = jump_persistence_check(trace)
    assert [j["position"] for j in report["jumps"]] == [0.5] and report["holds"]
    decay = math.exp(-8 * math.pi ** 2 * T)
    final = trace.final_state
    assert l2_distance(final, lambda x: decay * np.cos(2 * np.pi * x), (0.0, 0.5)) <= 2e-2
    assert l2_distance(final, lambda x: 3.0 + decay * np.cos(2 * np.pi * x), (0.5, 1.0 + 1e-12)) <= 2e-2
