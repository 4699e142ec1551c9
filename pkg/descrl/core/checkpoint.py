"""
Binary parameter checkpoints.

Layout (little-endian):
    magic "DRL1" | u32 format version | u32 parameter count
    per parameter: u32 name length | UTF-8 name | u32 rank |
                   int64 dims[rank] | float32 data[prod(dims)]
"""

from collections import OrderedDict
from typing import Mapping, Union
import hashlib
import os
import struct

import numpy as np

from .tensor import Tensor
from ..exceptions import CheckpointError

MAGIC = b"DRL1"
FORMAT_VERSION = 1

ArrayMap = Mapping[str, Union[Tensor, np.ndarray]]


def _array(value: Union[Tensor, np.ndarray]) -> np.ndarray:
    return value.data if isinstance(value, Tensor) else np.asarray(value)


def encode_params(params: ArrayMap) -> bytes:
    chunks = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(params))]
    for name, value in params.items():
        arr = _array(value)
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(np.asarray(arr.shape, dtype="<i8").tobytes())
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(chunks)


def decode_params(blob: bytes, path: str = "<bytes>") -> "OrderedDict[str, np.ndarray]":
    """
    Parse a checkpoint blob.

    Raises:
        CheckpointError: On bad magic, unknown version or truncation
    """
    if blob[:4] != MAGIC:
        raise CheckpointError("Bad checkpoint magic", path=path)
    offset = 4

    def take(n: int) -> bytes:
        nonlocal offset
        if offset + n > len(blob):
            raise CheckpointError("Truncated checkpoint", path=path)
        chunk = blob[offset:offset + n]
        offset += n
        return chunk

    version, count = struct.unpack("<II", take(8))
    if version != FORMAT_VERSION:
        raise CheckpointError(f"Unsupported checkpoint version {version}", path=path)

    params: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        name = take(name_len).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        dims = tuple(int(d) for d in np.frombuffer(take(8 * rank), dtype="<i8"))
        size = int(np.prod(dims)) if dims else 1
        data = np.frombuffer(take(4 * size), dtype="<f4").astype(np.float32)
        params[name] = data.reshape(dims)
    if offset != len(blob):
        raise CheckpointError("Trailing bytes after last parameter", path=path)
    return params


def save_checkpoint(path: str, params: ArrayMap) -> None:
    """Write params to path atomically."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(encode_params(params))
    os.replace(tmp, path)


def load_checkpoint(path: str) -> "OrderedDict[str, np.ndarray]":
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise CheckpointError(f"Cannot read checkpoint: {e}", path=path) from e
    return decode_params(blob, path)


def structure_hash(params: ArrayMap) -> str:
    """Hash of parameter names and shapes (not values)."""
    digest = hashlib.sha256()
    for name in sorted(params):
        digest.update(f"{name}:{tuple(_array(params[name]).shape)}\n".encode("utf-8"))
    return digest.hexdigest()[:16]


def parameter_hash(params: ArrayMap) -> str:
    """Hash of parameter values, for freeze and determinism checks."""
    digest = hashlib.sha256()
    for name in sorted(params):
        digest.update(name.encode("utf-8"))
        digest.update(np.ascontiguousarray(_array(params[name])).tobytes())
    return digest.hexdigest()[:16]

