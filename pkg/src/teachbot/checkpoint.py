"""Binary parameter checkpoints.

Layout (documented contract, round-trips bit-exactly):

    bytes 0..7    magic ``b"TBCKPT01"``
    bytes 8..15   little-endian uint64: byte length of the JSON header
    header        UTF-8 JSON ``{"meta": {...}, "tensors": [{"name", "shape",
                  "dtype"} ...]}``; dtype is always ``"<f8"``
    payload       each tensor's values, row-major, 64-bit little-endian
                  floats, concatenated in header order
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import FormatError
from .optim import Parameter

MAGIC = b"TBCKPT01"


def save_checkpoint(path, params: Iterable[Parameter], meta: dict | None = None) -> None:
    params = list(params)
    header = {
        "meta": meta or {},
        "tensors": [{"name": p.name, "shape": list(p.data.shape), "dtype": "<f8"}
                    for p in params],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for p in params:
            fh.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    """Returns (name -> array in file order, meta)."""
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise FormatError(f"{path}: not a teachbot checkpoint")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    try:
        header = json.loads(raw[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"{path}: corrupt checkpoint header: {e}") from e
    tensors: dict[str, np.ndarray] = {}
    off = 16 + hlen
    for spec in header["tensors"]:
        shape = tuple(spec["shape"])
        n = int(np.prod(shape)) if shape else 1
        end = off + 8 * n
        if end > len(raw):
            raise FormatError(f"{path}: truncated payload at tensor {spec['name']}")
        arr = np.frombuffer(raw[off:end], dtype="<f8").reshape(shape).copy()
        tensors[spec["name"]] = arr
        off = end
    if off != len(raw):
        raise FormatError(f"{path}: {len(raw) - off} trailing bytes")
    return tensors, header.get("meta", {})
