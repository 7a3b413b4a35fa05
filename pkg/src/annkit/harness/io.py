"""Binary vector file I/O.

Record format, repeated to end of file: a little-endian 32-bit integer d,
then d little-endian 32-bit IEEE-754 floats. Every record in a file must
carry the same d.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from annkit.core import Collection

__all__ = ["load_vecs", "save_vecs"]


def save_vecs(path: str | os.PathLike, X: Collection) -> None:
    if not X.is_dense:
        raise ValueError("vecs files hold dense vectors only")
    d = X.dim
    with open(path, "wb") as fh:
        header = struct.pack("<i", d)
        for i in range(len(X)):
            fh.write(header)
            fh.write(np.ascontiguousarray(X.vectors[i], dtype="<f4").tobytes())


def load_vecs(path: str | os.PathLike) -> Collection:
    raw = open(path, "rb").read()
    if len(raw) == 0:
        raise ValueError(f"{path}: empty file (a collection needs at least one vector)")
    rows = []
    offset = 0
    d = None
    while offset < len(raw):
        if offset + 4 > len(raw):
            raise ValueError(f"{path}: truncated record header at byte {offset}")
        (rec_d,) = struct.unpack_from("<i", raw, offset)
        offset += 4
        if rec_d <= 0:
            raise ValueError(f"{path}: invalid dimension {rec_d} at byte {offset - 4}")
        if d is None:
            d = rec_d
        elif rec_d != d:
            raise ValueError(f"{path}: inconsistent dimensions ({d} then {rec_d})")
        end = offset + 4 * rec_d
        if end > len(raw):
            raise ValueError(f"{path}: truncated record payload at byte {offset}")
        rows.append(np.frombuffer(raw, dtype="<f4", count=rec_d, offset=offset))
        offset = end
    return Collection(np.vstack(rows).astype(np.float32))
