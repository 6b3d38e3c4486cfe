"""
Tests for the quasistatic evolution, the crack threshold and the Mumford-Shah reference
"""

import math

import numpy as np
import pytest

from errors import InvalidSpacingError
from phases import Phase
from quasistatic import (
    LoadProgram,
    QuasistaticModel,
    h_tilde,
    hat_energy_table,
    hat_load,
    ms_quasistatic_oracle,
    quasistatic_convergence_table,
    quasistatic_run,
    quasistatic_step,
    ramp_load,
    unloading_energy_constant,
    zero_load,
)
from statics import critical_lambda

T0 = 1.5
TAU = 1e-3


def test_h_tilde_regression_values():
    assert h_tilde(1e-3) == pytest.approx(1.1428358589, abs=1e-8)
    assert h_tilde(1e-4) == pytest.approx(1.1208147134, abs=1e-8)


def test_h_tilde_trend():
    values = [h_tilde(e) for e in (1e-3, 1e-4, 1e-5, 1e-6)]
    gaps = [abs(v - 1.0) for v in values]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    assert all(v > 0.9 for v in values)
    assert all(v > critical_lambda(e) for v, e in zip(values, (1e-3, 1e-4, 1e-5, 1e-6)))


def test_h_tilde_range():
    with pytest.raises(InvalidSpacingError):
        h_tilde(0.1)
    # spacing must be 1/N
    with pytest.raises(InvalidSpacingError):
        h_tilde(3e-3)


@pytest.mark.parametrize("eps, expected", [(1e-2, 1.1876937621), (2e-3, 1.1524129861)])
def test_h_tilde_at_coarse_spacings(eps, expected):
    assert h_tilde(eps) == pytest.approx(expected, abs=1e-8)


def test_overstretch_at_critical_load_is_the_double_root():
    model = QuasistaticModel(1e-2, threshold=math.inf)
    lam = critical_lambda(1e-2)
    assert model.overstretch(lam) == pytest.approx(lam / 2.0, abs=1e-6)


@pytest.mark.parametrize("eps", [1e-2, 2e-3])
def test_hat_load_run_at_coarse_spacings(eps):
    trace = quasistatic_run(eps, 1e-2, hat_load(T0), 3 * T0)
    phases = [e["to"] for e in trace.events]
    assert phases[:3] == [Phase.LOADING.value, Phase.UNLOADING.value, Phase.FROZEN.value]
    assert np.all(np.diff(trace.column("memory")) >= 0.0)


def test_load_program_validation():
    with pytest.raises(ValueError):
        LoadProgram(h=lambda t: 1.0 + t, description="offset")
    with pytest.raises(ValueError):
        LoadProgram(h=lambda t: 0.0 if t < 1.0 else 1.0, description="jump")
    assert LoadProgram(h=lambda t: math.sqrt(t), description="sqrt")(4.0) == 2.0


def test_zero_load_stays_at_rest():
    trace = quasistatic_run(1e-3, 1e-2, zero_load(), 1.0)
    assert np.all(trace.energy_array() == 0.0)
    assert np.all(trace.column("memory") == 0.0)
    assert trace.events == []


def test_ramp_below_threshold_is_uniform():
    eps = 1e-3
    trace = quasistatic_run(eps, 1e-2, ramp_load(), 0.9)
    state = trace.final_state
    assert state.phase is Phase.ELASTIC
    assert np.allclose(np.diff(state.field.values), state.field.values[1] - state.field.values[0], rtol=0, atol=1e-15)
    big_l = -math.log(eps)
    closed = math.log1p(0.9 ** 2 * eps * big_l) / (eps * big_l)
    assert trace.energies[-1] == pytest.approx(closed, rel=1e-10)


def test_hat_load_matches_closed_form_table():
    eps = 1e-3
    trace = quasistatic_run(eps, TAU, hat_load(T0), 3 * T0)
    table = hat_energy_table(eps, T0, TAU, 3 * T0)
    assert table.shape == trace.energy_array().shape
    assert np.allclose(trace.energy_array(), table, rtol=1e-12, atol=1e-12)


def test_frozen_segment_energy_is_constant():
    trace = quasistatic_run(1e-3, TAU, hat_load(T0), 3 * T0)
    phases = [s.phase for _, s in trace.states]
    frozen = np.array([p is Phase.FROZEN for p in phases])
    assert frozen.any()
    values = trace.energy_array()[frozen]
    assert np.all(values == values[0])

    memory = trace.column("memory")
    assert np.all(np.diff(memory) >= 0.0)
    assert [e["to"] for e in trace.events][:3] == ["loading", "unloading", "frozen"]


def test_dissipation_flag_changes_only_unloading():
    eps = 1e-3
    load = hat_load(T0)
    with_memory = quasistatic_run(eps, TAU, load, 3 * T0)
    without = quasistatic_run(eps, TAU, load, 3 * T0, dissipation=False)
    loads = np.abs(with_memory.column("load"))
    unloading = loads < np.maximum.accumulate(loads)
    same = np.isclose(with_memory.energy_array(), without.energy_array(), rtol=1e-13, atol=0.0)
    assert np.all(same[~unloading])
    assert not np.any(same[unloading])


def test_single_step_helper_agrees_with_model():
    model = QuasistaticModel(1e-3)
    state = model.step(model.initial_state(), 1.3)
    again = quasistatic_step(model.initial_state(), 1.3, 1e-3, model.n, threshold=model.threshold)
    assert again == state
    assert state.phase is Phase.LOADING
    assert state.memory == pytest.approx(model.overstretch(1.3))
    assert state.memory_profile[-1] == state.memory
    assert state.memory_profile[:-1].sum() == 0.0


def test_negative_load_is_symmetric():
    model = QuasistaticModel(1e-3)
    up = model.step(model.initial_state(), 1.3)
    down = model.step(model.initial_state(), -1.3)
    assert down.last == -up.last
    assert model.energy(down) == model.energy(up)


def test_ms_oracle():
    ref = ms_quasistatic_oracle(hat_load(T0), 3 * T0, TAU)
    times, energies = ref["times"], ref["energies"]
    assert energies[np.searchsorted(times, 0.5)] == pytest.approx(0.25)
    assert np.all(energies[times > 1.0 + 1e-9] == 1.0)


def test_convergence_gaps_decrease():
    report = quasistatic_convergence_table(hat_load(T0), [1e-3, 1e-4], TAU, 3 * T0)
    gaps = [r["sup_gap"] for r in report["rows"]]
    assert gaps[0] == pytest.approx(0.3872, abs=1e-3)
    assert gaps[1] == pytest.approx(0.3236, abs=1e-3)
    assert report["monotone"]


@pytest.mark.slow
def test_hat_load_gap_at_fine_spacing():
    report = quasistatic_convergence_table(hat_load(T0), [1e-3, 1e-4, 1e-5, 1e-6], TAU, 3 * T0)
    gaps = [r["sup_gap"] for r in report["rows"]]
    assert report["monotone"]
    assert gaps[-1] <= 0.25


def test_convergence_table_flags_gap_growth():
    report = quasistatic_convergence_table(hat_load(T0), [1e-3, 1e-4], TAU, 3 * T0, slack=-0.5)
    assert not report["monotone"]
    assert len(report["traces"]) == 2
    assert report["oracle"]["energies"].shape == report["traces"][0].energy_array().shape


def test_unloading_energy_is_frozen():
    trace = quasistatic_run(1e-3, TAU, hat_load(T0), 3 * T0)
    report = unloading_energy_constant(trace)
    assert report["holds"]
    assert report["frozen_steps"] > 100
    assert report["spread"] == 0.0

    k = int(np.flatnonzero(trace.column("frozen"))[5])
    trace.energies[k] += 1e-6
    assert not unloading_energy_constant(trace)["holds"]


def test_unloading_check_without_frozen_steps():
    trace = quasistatic_run(1e-3, TAU, hat_load(T0), 3 * T0, dissipation=False)
    report = unloading_energy_constant(trace)
    assert report["frozen_steps"] == 0 and report["holds"]
