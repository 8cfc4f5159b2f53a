"""GEW1 weight files.

Layout (little-endian)::

    b"GEW1"
    u32 tensor_count
    per tensor: u32 name_len, name (UTF-8), u32 rank, u32 dims[rank], f32 data (row-major)
"""

import struct

import numpy as np

from ..errors import DataError

MAGIC = b"GEW1"


def dumps_weights(tensors):
    """Serialize an ordered ``name -> array`` mapping to GEW1 bytes."""
    chunks = [MAGIC, struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(getattr(arr, "data", arr))
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(chunks)


def loads_weights(buf):
    if buf[:4] != MAGIC:
        raise DataError("not a GEW1 file (bad magic)")
    pos = 4

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(buf):
            raise DataError("truncated GEW1 file")
        vals = struct.unpack_from(fmt, buf, pos)
        pos += size
        return vals

    (count,) = take("<I")
    out = {}
    for _ in range(count):
        (nlen,) = take("<I")
        name = bytes(buf[pos:pos + nlen]).decode("utf-8")
        pos += nlen
        (rank,) = take("<I")
        dims = take(f"<{rank}I") if rank else ()
        n = int(np.prod(dims)) if rank else 1
        if pos + 4 * n > len(buf):
            raise DataError("truncated GEW1 file")
        arr = np.frombuffer(buf, dtype="<f4", count=n, offset=pos).reshape(dims).astype(np.float32)
        pos += 4 * n
        out[name] = arr
    if pos != len(buf):
        raise DataError("trailing bytes after GEW1 payload")
    return out


def save_weights(path, tensors):
    with open(path, "wb") as f:
        f.write(dumps_weights(tensors))


def load_weights(path):
    with open(path, "rb") as f:
        return loads_weights(f.read())
