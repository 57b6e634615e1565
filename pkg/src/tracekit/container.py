"""Flat binary tensor container with a JSON header line.

Layout: one UTF-8 JSON line describing metadata and tensor shapes, then the
tensors' raw float64 little-endian bytes concatenated in header order. The
byte representation round-trips bit-exactly.
"""

from __future__ import annotations

import json

import numpy as np

_DTYPE = "<f8"


def write_container(path: str, header: dict, tensors: dict[str, np.ndarray]) -> None:
    meta = dict(header)
    meta["dtype"] = _DTYPE
    meta["tensors"] = [{"name": name, "shape": list(t.shape)} for name, t in tensors.items()]
    with open(path, "wb") as fh:
        fh.write(json.dumps(meta, sort_keys=True, ensure_ascii=False).encode("utf-8"))
        fh.write(b"\n")
        for t in tensors.values():
            fh.write(np.ascontiguousarray(t, dtype=_DTYPE).tobytes())


def read_container(path: str) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        blob = fh.read()
    header = json.loads(header_line.decode("utf-8"))
    tensors: dict[str, np.ndarray] = {}
    offset = 0
    for spec in header["tensors"]:
        shape = tuple(spec["shape"])
        size = int(np.prod(shape)) if shape else 1
        nbytes = size * 8
        chunk = blob[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise ValueError(f"container truncated at tensor {spec['name']!r}")
        tensors[spec["name"]] = np.frombuffer(chunk, dtype=_DTYPE).reshape(shape).copy()
        offset += nbytes
    if offset != len(blob):
        raise ValueError("container has trailing bytes")
    return header, tensors
