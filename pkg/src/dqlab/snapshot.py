"""Snapshot files: a magic line, a JSON header line, then raw array bytes.

The header lists each array's name, dtype and shape in payload order, so a
reader can validate sizes before touching the data. Arrays are stored
little-endian, row-major.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

MAGIC = b"DQLAB-SNAPSHOT 1\n"


class SnapshotError(ValueError):
    pass


def write_snapshot(path, kind: str, arrays: dict, **meta) -> None:
    entries = []
    chunks = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        entries.append({"name": name, "dtype": le.dtype.str, "shape": list(arr.shape)})
        chunks.append(le.tobytes())
    header = {"kind": kind, "arrays": entries, **meta}
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for c in chunks:
            fh.write(c)


def read_snapshot(path, kind: str | None = None) -> tuple[dict, dict]:
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise SnapshotError(f"{path}: not a snapshot file")
    end = raw.find(b"\n", len(MAGIC))
    if end < 0:
        raise SnapshotError(f"{path}: truncated header")
    try:
        header = json.loads(raw[len(MAGIC):end])
    except json.JSONDecodeError as exc:
        raise SnapshotError(f"{path}: corrupt header ({exc})") from None
    if kind is not None and header.get("kind") != kind:
        raise SnapshotError(f"{path}: expected a {kind!r} snapshot, found {header.get('kind')!r}")
    offset = end + 1
    arrays = {}
    for entry in header["arrays"]:
        dtype = np.dtype(entry["dtype"])
        shape = tuple(entry["shape"])
        nbytes = dtype.itemsize * int(np.prod(shape, dtype=np.int64))
        if offset + nbytes > len(raw):
            raise SnapshotError(f"{path}: payload truncated in array {entry['name']!r}")
        arrays[entry["name"]] = np.frombuffer(raw, dtype, count=nbytes // dtype.itemsize,
                                              offset=offset).reshape(shape).copy()
        offset += nbytes
    if offset != len(raw):
        raise SnapshotError(f"{path}: {len(raw) - offset} trailing bytes")
    return header, arrays
