"""Binary parameter checkpoints.

Layout (all integers little-endian uint32)::

    b"FACTS1" | count | count x ( name_len | name utf-8 | rank | dims... | float32 LE data )
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import CompatibilityError

MAGIC = b"FACTS1"


def save_checkpoint(path, tensors: dict[str, np.ndarray]) -> None:
    chunks = [MAGIC, struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    buf = Path(path).read_bytes()
    if buf[: len(MAGIC)] != MAGIC:
        raise CompatibilityError(f"{path}: not a checkpoint (bad magic)")
    pos = len(MAGIC)

    def take(fmt):
        nonlocal pos
        vals = struct.unpack_from(fmt, buf, pos)
        pos += struct.calcsize(fmt)
        return vals

    try:
        (count,) = take("<I")
        out = {}
        for _ in range(count):
            (n,) = take("<I")
            name = buf[pos : pos + n].decode("utf-8")
            pos += n
            (rank,) = take("<I")
            shape = take(f"<{rank}I") if rank else ()
            size = int(np.prod(shape, dtype=np.int64))
            arr = np.frombuffer(buf, dtype="<f4", count=size, offset=pos).reshape(shape)
            pos += 4 * size
            out[name] = arr.astype(np.float32)
    except (struct.error, ValueError) as exc:
        raise CompatibilityError(f"{path}: truncated or corrupt checkpoint ({exc})") from None
    if pos != len(buf):
        raise CompatibilityError(f"{path}: {len(buf) - pos} trailing bytes")
    return out
