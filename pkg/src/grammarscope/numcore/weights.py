"""IGWT weight container.

Layout (all integers little-endian uint32)::

    b"IGWT" | version | { name_len | name (utf-8) | rank | dims[rank] | float32[prod(dims)] }*

Records run to end of file; order is preserved.
"""
from __future__ import annotations

import struct
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"IGWT"
VERSION = 1


class WeightFormatError(ValueError):
    pass


def dumps_weights(arrays: Mapping[str, np.ndarray]) -> bytes:
    chunks = [MAGIC, struct.pack("<I", VERSION)]
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(chunks)


def loads_weights(blob: bytes) -> dict[str, np.ndarray]:
    if blob[:4] != MAGIC:
        raise WeightFormatError("bad magic, not an IGWT container")
    if len(blob) < 8:
        raise WeightFormatError("truncated header")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise WeightFormatError(f"unsupported IGWT version {version}")
    pos = 8
    out: dict[str, np.ndarray] = {}

    def need(n):
        if pos + n > len(blob):
            raise WeightFormatError(f"truncated record at byte {pos}")

    while pos < len(blob):
        need(4)
        (nlen,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        need(nlen + 4)
        name = blob[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (rank,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        need(4 * rank)
        dims = struct.unpack_from(f"<{rank}I", blob, pos)
        pos += 4 * rank
        count = int(np.prod(dims)) if rank else 1
        need(4 * count)
        out[name] = np.frombuffer(blob, dtype="<f4", count=count, offset=pos).reshape(dims).astype(np.float32)
        pos += 4 * count
    return out


def save_weights(path: str | Path, arrays: Mapping[str, np.ndarray]) -> None:
    Path(path).write_bytes(dumps_weights(arrays))


def load_weights(path: str | Path) -> dict[str, np.ndarray]:
    return loads_weights(Path(path).read_bytes())
