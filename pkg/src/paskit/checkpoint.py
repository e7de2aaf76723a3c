"""Named-tensor checkpoint container.

Layout: 8-byte magic, little-endian uint32 header length, UTF-8 JSON header,
then the raw tensor payload. The header records name, shape, dtype and byte
offset per tensor plus a free-form metadata object (counters, RNG states,
vocabularies), so a training run can resume exactly where it stopped.
All payload floats are little-endian.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"NTCK0001"
_DTYPES = {"f32": "<f4", "f64": "<f8"}
_NAMES = {v: k for k, v in _DTYPES.items()}


def save_checkpoint(path, tensors: dict[str, np.ndarray], meta: dict) -> None:
    entries = []
    payload = bytearray()
    for name, arr in tensors.items():
        if arr.dtype == np.float32:
            kind = "f32"
        elif arr.dtype == np.float64:
            kind = "f64"
        else:
            raise FormatError(f"unsupported dtype {arr.dtype} for tensor {name!r}")
        raw = np.ascontiguousarray(arr, dtype=_DTYPES[kind]).tobytes()
        entries.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "precision": kind,
                "offset": len(payload),
                "nbytes": len(raw),
            }
        )
        payload.extend(raw)
    header = json.dumps({"version": 1, "tensors": entries, "meta": meta}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(bytes(payload))


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    data = path.read_bytes()
    if data[: len(MAGIC)] != MAGIC:
        raise FormatError(f"{path}: not a checkpoint file (bad magic)")
    (header_len,) = struct.unpack_from("<I", data, len(MAGIC))
    header_start = len(MAGIC) + 4
    try:
        header = json.loads(data[header_start : header_start + header_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt checkpoint header: {exc}") from exc
    payload_start = header_start + header_len
    tensors: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        dt = _DTYPES[entry["precision"]]
        start = payload_start + entry["offset"]
        raw = data[start : start + entry["nbytes"]]
        arr = np.frombuffer(raw, dtype=dt).reshape(entry["shape"])
        tensors[entry["name"]] = arr.astype(dt.lstrip("<"), copy=True)
    return tensors, header["meta"]
