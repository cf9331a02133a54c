"""Flat binary parameter container.

Format, all integers little-endian:

    magic   4 bytes  b"NFCK"
    version u32      currently 1
    then per-parameter records until end of file:
        name_len u32
        name     utf-8 bytes
        rank     u32
        extents  rank x u32
        values   product(extents) x float64, little-endian

Values are stored as raw float64 bytes, so a save/load round-trip is
bit-exact.  Record order is preserved.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"NFCK"
VERSION = 1


class CheckpointError(Exception):
    pass


def save_checkpoint(path, named_arrays: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        for name, arr in named_arrays.items():
            a = np.asarray(arr, dtype="<f8")
            if a.ndim:
                a = np.ascontiguousarray(a)  # 0-d would be promoted to 1-d
            name_b = name.encode("utf-8")
            f.write(struct.pack("<I", len(name_b)))
            f.write(name_b)
            f.write(struct.pack("<I", a.ndim))
            for extent in a.shape:
                f.write(struct.pack("<I", extent))
            f.write(a.tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != MAGIC:
        raise CheckpointError(f"bad magic {blob[:4]!r} in {path}")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} in {path}")
    out: dict[str, np.ndarray] = {}
    off = 8
    total = len(blob)
    while off < total:
        off, name_len = _read_u32(blob, off, path)
        if off + name_len > total:
            raise CheckpointError(f"truncated name in {path}")
        name = blob[off:off + name_len].decode("utf-8")
        off += name_len
        off, rank = _read_u32(blob, off, path)
        shape = []
        for _ in range(rank):
            off, extent = _read_u32(blob, off, path)
            shape.append(extent)
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = count * 8
        if off + nbytes > total:
            raise CheckpointError(f"truncated values for {name!r} in {path}")
        out[name] = np.frombuffer(blob[off:off + nbytes], dtype="<f8").reshape(shape).copy()
        off += nbytes
    return out


def _read_u32(blob, off, path):
    if off + 4 > len(blob):
        raise CheckpointError(f"truncated record header in {path}")
    (val,) = struct.unpack_from("<I", blob, off)
    return off + 4, val
