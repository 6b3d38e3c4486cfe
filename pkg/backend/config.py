"""
PM-Lab Experiment Configs
Flat KEY=VALUE files (dotenv syntax, '#' comments) mapped onto the parameter
model of the chosen experiment. Reserved keys: experiment, output, seed,
sweep.axis, sweep.values. Every other key is an experiment parameter.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from io import StringIO
from pathlib import Path
from typing import Any, Dict, List, Optional, Union, get_args, get_origin

from dotenv.parser import parse_stream
from pydantic import ValidationError

from errors import ConfigError
from experiments import ExperimentParams, get_experiment_manager
from settings import get_settings

logger = logging.getLogger(__name__)

RESERVED = ("experiment", "output", "seed")
SWEEP_AXIS = "sweep.axis"
SWEEP_VALUES = "sweep.values"


@dataclass(frozen=True)
class Entry:
    key: str
    value: str
    line: Optional[int]


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated experiment run; `raw` keeps the text values for sweep points"""

    experiment: str
    params: ExperimentParams
    output: Path
    seed: int
    raw: Dict[str, Entry] = field(default_factory=dict)
    sweep_axis: Optional[str] = None
    sweep_values: List[Any] = field(default_factory=list)
    source: Optional[Path] = None

    @property
    def is_sweep(self) -> bool:
        return self.sweep_axis is not None

    def point(self, value: Any, output: Path) -> "ExperimentConfig":
        """The single run at one sweep value"""
        raw = dict(self.raw)
        line = raw[self.sweep_axis].line if self.sweep_axis in raw else None
        raw[self.sweep_axis] = Entry(self.sweep_axis, _render(value), line)
        params = build_params(self.experiment, raw)
        return replace(self, params=params, output=output, raw=raw, sweep_axis=None, sweep_values=[])

    def materialized(self) -> Dict[str, Any]:
        return {
            "experiment": self.experiment,
            "output": str(self.output),
            "seed": self.seed,
            "parameters": self.params.model_dump(),
            "sweep": {"axis": self.sweep_axis, "values": self.sweep_values} if self.is_sweep else None,
        }


# ============================================================================
# VALUE COERCION
# ============================================================================

def _render(value: Any) -> str:
    if isinstance(value, float):
        return str(int(value)) if value.is_integer() else repr(value)
    return str(value)


def _is_list(annotation: Any) -> bool:
    origin = get_origin(annotation)
    if origin is Union:
        return any(_is_list(a) for a in get_args(annotation) if a is not type(None))
    return origin in (list, List)


def expand_range(text: str, line: Optional[int] = None, key: Optional[str] = None) -> List[float]:
    """'start:stop:step' inclusive of stop (to 1e-9 of a step)"""
    try:
        start, stop, step = (float(p) for p in text.split(":"))
    except ValueError as e:
        raise ConfigError(f"range '{text}' must be start:stop:step", line, key) from e
    if not (step > 0.0 and stop >= start and math.isfinite(stop)):
        raise ConfigError(f"range '{text}' needs step > 0 and stop >= start", line, key)
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 12) for i in range(count)]


def split_list(text: str, line: Optional[int] = None, key: Optional[str] = None) -> List[Any]:
    """Comma list or start:stop:step range; empty text gives an empty list"""
    text = text.strip()
    if not text:
        return []
    if "," not in text and text.count(":") == 2:
        return expand_range(text, line, key)
    return [part.strip() for part in text.split(",") if part.strip()]


# ============================================================================
# PARSING
# ============================================================================

def read_entries(text: str) -> Dict[str, Entry]:
    """KEY=VALUE bindings with their 1-based line numbers; duplicates are errors"""
    entries: Dict[str, Entry] = {}
    for binding in parse_stream(StringIO(text)):
        line = binding.original.line
        if binding.error:
            raise ConfigError(f"cannot parse '{binding.original.string.strip()}'", line)
        if binding.key is None:
            continue
        if binding.value is None:
            raise ConfigError("missing '=' and value", line, binding.key)
        if binding.key in entries:
            raise ConfigError(f"duplicate key (first set on line {entries[binding.key].line})", line, binding.key)
        entries[binding.key] = Entry(binding.key, binding.value, line)
    return entries


def build_params(experiment: str, entries: Dict[str, Entry]) -> ExperimentParams:
    """Coerce the non-reserved entries by field annotation and validate"""
    model = get_experiment_manager().get(experiment).params_model
    values: Dict[str, Any] = {}
    for key, entry in entries.items():
        if key in RESERVED or key.startswith("sweep."):
            continue
        info = model.model_fields.get(key)
        if info is not None and _is_list(info.annotation):
            values[key] = split_list(entry.value, entry.line, key)
        else:
            values[key] = entry.value
    try:
        return model(**values)
    except ValidationError as e:
        err = e.errors()[0]
        key = str(err["loc"][0]) if err["loc"] else None
        entry = entries.get(key) if key else None
        got = f" (got {entry.value!r})" if entry else ""
        raise ConfigError(f"{experiment}: {err['msg']}{got}", entry.line if entry else None, key) from e


def parse_config(text: str, experiment: Optional[str] = None, overrides: Optional[Dict[str, str]] = None,
                 source: Optional[Path] = None) -> ExperimentConfig:
    """
    Build an ExperimentConfig from config text. `experiment` (the CLI subcommand)
    must agree with the file's experiment key when both are given; overrides
    replace file values and carry no line number.
    """
    entries = read_entries(text)
    for key, value in (overrides or {}).items():
        entries[key] = Entry(key, value, None)

    declared = entries.get("experiment")
    if declared is None and experiment is None:
        raise ConfigError("no experiment given", key="experiment")
    if declared is not None and experiment is not None and declared.value != experiment:
        raise ConfigError(f"config declares '{declared.value}' but '{experiment}' was requested",
                          declared.line, "experiment")
    name = declared.value if declared is not None else experiment
    model = get_experiment_manager().get(name).params_model
    axis, sweep_values = _read_sweep(entries, model.model_fields, name)
    if axis is not None:
        if axis not in entries:
            entries[axis] = Entry(axis, _render(sweep_values[0]), entries[SWEEP_VALUES].line)
        # every point must validate before anything runs
        for value in sweep_values:
            build_params(name, {**entries, axis: Entry(axis, _render(value), entries[SWEEP_VALUES].line)})
    params = build_params(name, entries)

    settings = get_settings()
    seed_entry = entries.get("seed")
    try:
        seed = int(seed_entry.value) if seed_entry else settings.seed
    except ValueError as e:
        raise ConfigError(f"seed must be an integer, got {seed_entry.value!r}", seed_entry.line, "seed") from e
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("seed must fit in 64 bits", seed_entry.line if seed_entry else None, "seed")
    output = Path(entries["output"].value) if "output" in entries else Path(settings.output_dir) / name

    return ExperimentConfig(experiment=name, params=params, output=output, seed=seed, raw=entries,
                            sweep_axis=axis, sweep_values=sweep_values, source=source)


def _read_sweep(entries: Dict[str, Entry], fields: Dict[str, Any], name: str):
    unknown = [k for k in entries if k.startswith("sweep.") and k not in (SWEEP_AXIS, SWEEP_VALUES)]
    if unknown:
        raise ConfigError("unknown sweep key", entries[unknown[0]].line, unknown[0])
    axis_entry = entries.get(SWEEP_AXIS)
    values_entry = entries.get(SWEEP_VALUES)
    if axis_entry is None and values_entry is None:
        return None, []
    if axis_entry is None or values_entry is None:
        present = values_entry or axis_entry
        missing = SWEEP_AXIS if axis_entry is None else SWEEP_VALUES
        raise ConfigError(f"a sweep also needs {missing}", present.line, missing)
    axis = axis_entry.value
    if axis not in fields:
        raise ConfigError(f"sweep axis '{axis}' is not a parameter of {name}", axis_entry.line, SWEEP_AXIS)
    values = split_list(values_entry.value, values_entry.line, SWEEP_VALUES)
    if not values:
        raise ConfigError("sweep.values is empty", values_entry.line, SWEEP_VALUES)
    return axis, [_number(v) for v in values]


def _number(value: Any) -> Any:
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            return value
    return value


def load_config(path: Union[str, Path], experiment: Optional[str] = None,
                overrides: Optional[Dict[str, str]] = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from e
    config = parse_config(text, experiment, overrides, source=path)
    logger.info(f"📄 Loaded {config.experiment} config from {path}")
    return config
