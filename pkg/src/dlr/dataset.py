"""Binary dataset files: a JSON header followed by little-endian row-major records.

Layout: ``b"DLRD"`` magic, uint32 little-endian header length, UTF-8 JSON header,
then ``count`` records, each the concatenation of the header's fields in order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
MAGIC = b"DLRD"
DTYPES = {"f64": "<f8", "f32": "<f4", "i64": "<i8"}


def write_dataset(path, arrays: dict[str, np.ndarray], *, task: str, seed: int,
                  dtype: str = "f64", extra: dict | None = None) -> dict:
    """Write ``arrays`` (each with leading record axis) and return the header.

    Float arrays are stored as ``dtype``; integer arrays as i64.
    """
    if dtype not in ("f64", "f32"):
        raise ValueError(f"dtype must be f64 or f32, got {dtype!r}")
    counts = {v.shape[0] for v in arrays.values()}
    if len(counts) != 1:
        raise ValueError("all arrays need the same record count")
    count = counts.pop()
    fields = []
    for name, v in arrays.items():
        fdt = "i64" if np.issubdtype(v.dtype, np.integer) else dtype
        fields.append({"name": name, "shape": list(v.shape[1:]), "dtype": fdt})
    header = {"format_version": FORMAT_VERSION, "task": task, "count": int(count), "seed": seed,
              "dtype": dtype, "fields": fields, **(extra or {})}
    blob = json.dumps(header, sort_keys=True).encode()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC + struct.pack("<I", len(blob)) + blob)
        flat = [np.ascontiguousarray(arrays[fd["name"]], dtype=DTYPES[fd["dtype"]]).reshape(count, -1)
                for fd in fields]
        f.write(np.concatenate([a.view(np.uint8) for a in flat], axis=1).tobytes())
    return header


def read_header(path) -> tuple[dict, int]:
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise ValueError(f"{path}: not a dataset file")
        (n,) = struct.unpack("<I", f.read(4))
        return json.loads(f.read(n)), 8 + n


def record_nbytes(header: dict) -> int:
    return sum(int(np.prod(fd["shape"], dtype=np.int64)) * np.dtype(DTYPES[fd["dtype"]]).itemsize
               for fd in header["fields"])


def read_dataset(path) -> tuple[dict, dict[str, np.ndarray]]:
    header, offset = read_header(path)
    if header.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported dataset version {header.get('format_version')}")
    raw = Path(path).read_bytes()[offset:]
    count, rec = header["count"], record_nbytes(header)
    if len(raw) != count * rec:
        raise ValueError(f"{path}: payload is {len(raw)} bytes, header implies {count * rec}")
    table = np.frombuffer(raw, dtype=np.uint8).reshape(count, rec)
    out, col = {}, 0
    for fd in header["fields"]:
        dt = np.dtype(DTYPES[fd["dtype"]])
        nb = int(np.prod(fd["shape"], dtype=np.int64)) * dt.itemsize
        out[fd["name"]] = table[:, col:col + nb].copy().view(dt).reshape([count] + fd["shape"])
        col += nb
    return header, out
