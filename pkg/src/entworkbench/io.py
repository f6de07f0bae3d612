"""JSON operator files, CSV tables and run records.

Operators serialize as ``{"dims": [...], "data": rows}`` where ``data`` is the
row-major matrix with every entry a ``[re, im]`` pair (a flat list of pairs
for vectors). Extra keys (``kind``, ``family``, ``role``, ...) are tags.
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
import os
from dataclasses import asdict, dataclass, field, is_dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .linalg import DimensionError

FORMAT_VERSION = 1


class FormatError(ValueError):
    """Malformed input file; the message carries the location."""


def _pairs(a: np.ndarray):
    if a.ndim == 1:
        return [[float(z.real), float(z.imag)] for z in a]
    return [_pairs(row) for row in a]


def encode_operator(op: np.ndarray, dims: Sequence[int], **tags) -> dict:
    op = np.asarray(op, dtype=complex)
    out = {"dims": [int(d) for d in dims], "data": _pairs(op)}
    if op.ndim == 1:
        out.setdefault("kind", "pure")
    out.update(tags)
    return out


def decode_operator(obj: Any, where: str = "$") -> tuple[np.ndarray, list[int]]:
    """Inverse of :func:`encode_operator`; raises :class:`FormatError` or :class:`DimensionError`."""
    if not isinstance(obj, dict) or "dims" not in obj or "data" not in obj:
        raise FormatError(f"{where}: operator object needs 'dims' and 'data'")
    dims = obj["dims"]
    if not isinstance(dims, list) or not dims or not all(isinstance(d, int) and d > 0 for d in dims):
        raise FormatError(f"{where}.dims: expected a list of positive integers")
    try:
        arr = np.asarray(obj["data"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{where}.data: ragged or non-numeric entries ({exc})") from None
    if arr.ndim not in (2, 3) or arr.shape[-1] != 2:
        raise FormatError(f"{where}.data: expected [re, im] pairs, got array of shape {arr.shape}")
    z = arr[..., 0] + 1j * arr[..., 1]
    total = math.prod(dims)
    if z.ndim == 2 and z.shape != (total, total) or z.ndim == 1 and z.shape != (total,):
        raise DimensionError(f"{where}: data of shape {z.shape} does not match dims {dims}")
    return z, dims


def jsonable(obj: Any) -> Any:
    """Recursively convert arrays, complex numbers and dataclasses to JSON types."""
    if isinstance(obj, np.ndarray):
        if obj.ndim == 2 or np.iscomplexobj(obj):
            return {"shape": list(obj.shape), "data": _pairs(obj.astype(complex))}
        return obj.tolist()
    if is_dataclass(obj) and not isinstance(obj, type):
        return jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def dumps(obj: Any) -> str:
    """Deterministic serialization: sorted keys, fixed indentation, trailing newline."""
    return json.dumps(jsonable(obj), sort_keys=True, indent=1, allow_nan=False) + "\n"


def load_json(path: str | os.PathLike) -> Any:
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None


def load_operator(path: str | os.PathLike) -> tuple[np.ndarray, list[int], dict]:
    obj = load_json(path)
    op, dims = decode_operator(obj, str(path))
    tags = {k: v for k, v in obj.items() if k not in ("dims", "data")}
    if op.ndim == 1:
        op = np.outer(op, op.conj())
        tags["kind"] = "density"
        tags["from_pure"] = True
    return op, dims, tags


@dataclass
class RunRecord:
    """Inputs and payload of one command; wall time is kept out so replays compare bitwise."""

    command: list[str]
    config: dict = field(default_factory=dict)
    seeds: list[int] = field(default_factory=list)
    tolerances: dict = field(default_factory=dict)
    payload: Any = None
    version: int = FORMAT_VERSION

    def as_dict(self) -> dict:
        return {"command": self.command, "config": self.config, "seeds": self.seeds,
                "tolerances": self.tolerances, "payload": self.payload, "version": self.version}


def csv_text(header: Sequence[str], rows: Iterable[dict]) -> str:
    buf = _io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(header), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: jsonable(row.get(k)) for k in header})
    return buf.getvalue()


def write_text(path: str | os.PathLike | None, text: str) -> None:
    if path is None or str(path) == "-":
        print(text, end="")
    else:
        Path(path).write_text(text)
