"""
PM-Lab Outputs
CSV tables, JSON run manifests and binary state dumps
"""

import csv
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np

from energy_core import LatticeField

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

DUMP_HEADER = np.dtype([("n", "<i8"), ("eps", "<f8"), ("tau", "<f8"), ("k", "<i8")])


def format_cell(value: Any) -> str:
    """17 significant digits for floats; everything else via str"""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        return format(value, ".17g")
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (list, tuple, np.ndarray)):
        return " ".join(format_cell(v) for v in value)
    if value is None:
        return ""
    return str(value)


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """Rows in the given order, '\\n' line endings"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_cell(v) for v in row])
            count += 1
    logger.debug(f"wrote {count} rows to {path}")
    return path


def write_dict_rows(path: PathLike, rows: List[Dict[str, Any]], header: Sequence[str] = ()) -> Path:
    header = list(header) or (list(rows[0].keys()) if rows else [])
    return write_csv(path, header, ([row.get(col) for col in header] for row in rows))


def read_csv(path: PathLike) -> Tuple[List[str], List[List[str]]]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    return rows[0], rows[1:]


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else repr(value)
    if isinstance(value, Path):
        return str(value)
    if hasattr(value, "value") and hasattr(value, "name"):
        return value.value
    return value


def write_manifest(path: PathLike, payload: Dict[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def write_state_dump(path: PathLike, field: LatticeField, tau: float, k: int) -> Path:
    """Little-endian header (int64 N, float64 eps, float64 tau, int64 k) then N+1 float64 values"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = np.array([(field.n, field.spacing, tau, k)], dtype=DUMP_HEADER)
    with path.open("wb") as fh:
        fh.write(header.tobytes())
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())
    return path


def read_state_dump(path: PathLike) -> Dict[str, Any]:
    raw = Path(path).read_bytes()
    header = np.frombuffer(raw[:DUMP_HEADER.itemsize], dtype=DUMP_HEADER)[0]
    values = np.frombuffer(raw[DUMP_HEADER.itemsize:], dtype="<f8").copy()
    if values.size != int(header["n"]) + 1:
        raise ValueError(f"dump {path} holds {values.size} values for N={int(header['n'])}")
    return {
        "n": int(header["n"]),
        "eps": float(header["eps"]),
        "tau": float(header["tau"]),
        "k": int(header["k"]),
        "values": values,
    }
