"""Report serialization: JSON-ready conversion, JSON/CSV writers and the
config hash embedded in every report.

Output is deterministic: keys are sorted, floats use repr and nothing
time-dependent is written.
"""

import csv
import dataclasses
import hashlib
import io
import json
import logging
import os
from enum import Enum
from typing import Any, Dict, Iterable, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)


def to_jsonable(obj: Any) -> Any:
    """Recursively convert dataclasses, numpy values, enums and complex numbers."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def dumps(report: Any) -> str:
    return json.dumps(to_jsonable(report), sort_keys=True, indent=2) + "\n"


def config_hash(config: Dict) -> str:
    """sha256 of the canonical JSON form of a config mapping."""
    canonical = json.dumps(to_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _emit(text: str, path: Optional[str]) -> str:
    if path:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        logger.info(f"Report written to {path}")
    return text


def write_json(report: Any, path: Optional[str] = None) -> str:
    """Serialize a report; writes it to `path` when given and returns the text."""
    return _emit(dumps(report), path)


def _cell(value: Any) -> Any:
    value = to_jsonable(value)
    if isinstance(value, dict) and set(value) == {"re", "im"}:
        return f"{value['re']!r}{value['im']:+}j"
    if isinstance(value, (list, dict)):
        return json.dumps(value, sort_keys=True, separators=(",", ":"))
    if isinstance(value, float):
        return repr(value)
    return value


def write_csv(rows: Iterable[Dict], columns: Sequence[str], path: Optional[str] = None,
              metadata: Optional[Dict] = None) -> str:
    """One row per unit; columns fixed by the caller, missing cells left empty.

    `metadata` goes on a leading ``# key=value ...`` line, keys sorted.
    """
    buf = io.StringIO()
    if metadata:
        buf.write("# " + " ".join(f"{k}={_cell(metadata[k])}" for k in sorted(metadata)) + "\n")
    writer = csv.DictWriter(buf, fieldnames=list(columns), extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _cell(v) for k, v in row.items()})
    return _emit(buf.getvalue(), path)
