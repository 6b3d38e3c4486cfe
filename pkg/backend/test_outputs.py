"""
Tests for CSV, manifest and state-dump writers
"""

import json

import numpy as np
import pytest

from energy_core import LatticeField
from outputs import DUMP_HEADER, format_cell, read_csv, read_state_dump, write_csv, write_manifest, write_state_dump


def test_floats_round_trip(rng):
    for x in rng.normal(0.0, 1e3, 200):
        assert float(format_cell(x)) == x
    assert format_cell(0.1) == "0.10000000000000001"
    assert format_cell(0.5) == "0.5"
    assert format_cell(np.float64(2.0 ** -10)) == "0.0009765625"
    assert format_cell(5e-324) == "4.9406564584124654e-324"
    assert format_cell(1e20) == "1e+20"
    assert format_cell(float("inf")) == "inf"
    assert format_cell(float("nan")) == "nan"


def test_cells_of_other_types():
    assert format_cell(True) == "true"
    assert format_cell(np.int64(7)) == "7"
    assert format_cell(None) == ""
    assert format_cell([1, 2.5]) == "1 2.5"


def test_csv_layout(tmp_path):
    path = write_csv(tmp_path / "sub" / "t.csv", ["k", "value"], [[0, 0.5], [1, 1 / 3]])
    assert path.read_bytes() == b"k,value\n0,0.5\n1,0.33333333333333331\n"
    header, rows = read_csv(path)
    assert header == ["k", "value"] and rows[1] == ["1", "0.33333333333333331"]


def test_manifest_is_sorted_json(tmp_path):
    path = write_manifest(tmp_path / "m.json", {"b": np.float64(2.0), "a": np.arange(3), "c": {"inf": float("inf")}})
    data = json.loads(path.read_text())
    assert list(data) == ["a", "b", "c"]
    assert data["a"] == [0, 1, 2]
    assert data["c"]["inf"] == "inf"


def test_state_dump(tmp_path):
    field = LatticeField.from_function(lambda x: np.sin(x), 8)
    path = write_state_dump(tmp_path / "s.bin", field, 1e-3, 42)
    raw = path.read_bytes()
    assert len(raw) == DUMP_HEADER.itemsize + 9 * 8
    assert DUMP_HEADER.itemsize == 32
    dump = read_state_dump(path)
    assert dump["n"] == 8 and dump["k"] == 42 and dump["tau"] == 1e-3 and dump["eps"] == 0.125
    assert np.array_equal(dump["values"], field.values)

    path.write_bytes(raw[:-8])
    with pytest.raises(ValueError):
        read_state_dump(path)
