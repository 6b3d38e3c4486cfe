"""
Tests for config parsing, typed coercion and sweep declarations
"""

import pytest

from config import expand_range, parse_config, read_entries, split_list
from errors import ConfigError


def test_entries_keep_line_numbers():
    text = "# comment\nexperiment=statics\n\nlambdas=0.5,1.0  # inline\nfunction=\"step(x, 0.5)\"\n"
    entries = read_entries(text)
    assert entries["experiment"].line == 2
    assert entries["lambdas"].value == "0.5,1.0"
    assert entries["lambdas"].line == 4
    assert entries["function"].value == "step(x, 0.5)"


def test_malformed_line_reports_line():
    with pytest.raises(ConfigError) as info:
        read_entries("experiment=statics\nlambdas=\"0.5\n")
    assert info.value.line == 2


def test_duplicate_key():
    with pytest.raises(ConfigError) as info:
        read_entries("eps=0.01\neps=0.02\n")
    assert info.value.key == "eps" and info.value.line == 2


def test_ranges_and_lists():
    values = expand_range("0:3:0.01")
    assert len(values) == 301
    assert values[0] == 0.0 and values[-1] == 3.0 and values[7] == 0.07
    assert split_list("1e-2, 1e-3") == ["1e-2", "1e-3"]
    assert split_list("  ") == []
    with pytest.raises(ConfigError):
        expand_range("3:0:0.5")


def test_statics_config_materializes_defaults():
    cfg = parse_config("experiment=statics\neps=0.01\nlambdas=0.5:1.5:0.5\n")
    assert cfg.experiment == "statics"
    assert cfg.params.lambdas == [0.5, 1.0, 1.5]
    assert cfg.params.n == 100
    assert cfg.params.perturbations == 10_000
    assert not cfg.is_sweep
    assert cfg.materialized()["parameters"]["n"] == 100


def test_unknown_key_names_key_and_line():
    with pytest.raises(ConfigError) as info:
        parse_config("experiment=statics\nlambdas=1.0\nlamdba=2\n")
    assert info.value.key == "lamdba"
    assert info.value.line == 3


def test_missing_required_key():
    with pytest.raises(ConfigError) as info:
        parse_config("experiment=statics\neps=0.01\n")
    assert info.value.key == "lambdas"


def test_bad_value_reports_line():
    with pytest.raises(ConfigError) as info:
        parse_config("experiment=gamma-probe\neps=1e-3,abc\n")
    assert info.value.line == 2 and info.value.key == "eps"


def test_unknown_experiment():
    with pytest.raises(ConfigError) as info:
        parse_config("experiment=fracture\n")
    assert info.value.key == "experiment"


def test_subcommand_must_match_config():
    with pytest.raises(ConfigError):
        parse_config("experiment=statics\nlambdas=1\n", experiment="dynamics")
    cfg = parse_config("lambdas=1\n", experiment="statics")
    assert cfg.experiment == "statics"


def test_expression_errors_are_config_errors():
    with pytest.raises(ConfigError) as info:
        parse_config("experiment=dynamics\nn=50\ninitial=\"__import__('os')\"\n")
    assert info.value.key == "initial" and info.value.line == 3


def test_dynamics_stability_and_override():
    with pytest.raises(ConfigError):
        parse_config("experiment=dynamics\nn=100\ntau=1e-4\n")
    cfg = parse_config("experiment=dynamics\nn=100\ntau=1e-4\n", overrides={"allow_unstable": "true"})
    assert cfg.params.allow_unstable

    default = parse_config("experiment=dynamics\nn=100\nT=0.001\n")
    assert default.params.tau == pytest.approx(1e-4 / 8)
    assert default.params.eps == 0.01


def test_seed_and_output_overrides(tmp_path):
    cfg = parse_config("experiment=gamma-probe\nseed=5\n", overrides={"seed": "9", "output": str(tmp_path)})
    assert cfg.seed == 9
    assert cfg.output == tmp_path


def test_sweep_points():
    text = "experiment=gamma-probe\nfunction=x\nsweep.axis=eps\nsweep.values=1e-2,1e-3\n"
    cfg = parse_config(text)
    assert cfg.is_sweep and cfg.sweep_values == [1e-2, 1e-3]
    point = cfg.point(1e-3, cfg.output / "point-001")
    assert point.params.eps == [1e-3]
    assert not point.is_sweep


def test_sweep_supplies_required_axis():
    cfg = parse_config("experiment=statics\nperturbations=0\nsweep.axis=lambdas\nsweep.values=0.5,1.5\n")
    assert cfg.point(1.5, cfg.output).params.lambdas == [1.5]


@pytest.mark.parametrize("text, key", [
    ("experiment=gamma-probe\nsweep.axis=eps\nsweep.values=\n", "sweep.values"),
    ("experiment=gamma-probe\nsweep.axis=eps\n", "sweep.values"),
    ("experiment=gamma-probe\nsweep.axis=gap\nsweep.values=1\n", "sweep.axis"),
    ("experiment=gamma-probe\nsweep.axis=eps\nsweep.values=1e-2\nsweep.jobs=4\n", "sweep.jobs"),
])
def test_bad_sweeps(text, key):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.key == key


def test_sweep_points_validated_up_front():
    with pytest.raises(ConfigError):
        parse_config("experiment=dynamics\nn=100\nsweep.axis=tau\nsweep.values=1e-5,1e-3\n")
