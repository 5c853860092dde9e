"""
Weights file codec.

Layout: an 8-byte little-endian header length, a UTF-8 JSON header
``{"metadata": {...}, "tensors": [{"name", "shape", "offset"}, ...]}``, then
the tensors as little-endian float64, each at its byte offset into the payload.
"""

import json
import struct
from pathlib import Path
from typing import Any, Dict, Mapping, Tuple

import numpy as np

from ..errors import WeightsFormatError
from ..utils import PathLike, save_bytes

_LENGTH = struct.Struct("<Q")
_DTYPE = np.dtype("<f8")


def encode_weights(tensors: Mapping[str, np.ndarray], metadata: Mapping[str, Any]) -> bytes:
    entries = []
    chunks = []
    offset = 0
    for name, array in tensors.items():
        data = np.ascontiguousarray(array, dtype=_DTYPE)
        entries.append({"name": name, "shape": list(data.shape), "offset": offset})
        chunks.append(data.tobytes())
        offset += data.nbytes
    header = json.dumps({"metadata": dict(metadata), "tensors": entries}, sort_keys=True, separators=(",", ":"))
    header_bytes = header.encode("utf-8")
    return _LENGTH.pack(len(header_bytes)) + header_bytes + b"".join(chunks)


def decode_weights(blob: bytes, source: str = "<bytes>") -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    if len(blob) < _LENGTH.size:
        raise WeightsFormatError(f"{source}: truncated weights file")
    (length,) = _LENGTH.unpack_from(blob)
    start = _LENGTH.size + length
    if start > len(blob):
        raise WeightsFormatError(f"{source}: header length {length} exceeds file size")
    try:
        header = json.loads(blob[_LENGTH.size : start].decode("utf-8"))
        entries = header["tensors"]
        metadata = header.get("metadata", {})
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as e:
        raise WeightsFormatError(f"{source}: unreadable header ({e})")

    payload = memoryview(blob)[start:]
    tensors: Dict[str, np.ndarray] = {}
    for entry in entries:
        try:
            name, shape, offset = entry["name"], tuple(entry["shape"]), int(entry["offset"])
        except (KeyError, TypeError, ValueError):
            raise WeightsFormatError(f"{source}: malformed tensor entry {entry!r}")
        count = int(np.prod(shape, dtype=np.int64))
        end = offset + count * _DTYPE.itemsize
        if offset < 0 or end > len(payload):
            raise WeightsFormatError(f"{source}: tensor {name!r} runs past the end of the payload")
        if name in tensors:
            raise WeightsFormatError(f"{source}: duplicate tensor {name!r}")
        tensors[name] = np.frombuffer(payload[offset:end], dtype=_DTYPE).reshape(shape).astype(np.float64)
    return tensors, metadata


def save_weights(path: PathLike, tensors: Mapping[str, np.ndarray], metadata: Mapping[str, Any]) -> Path:
    return save_bytes(encode_weights(tensors, metadata), path)


def load_weights(path: PathLike) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"weights file not found: {path}")
    return decode_weights(path.read_bytes(), source=str(path))
