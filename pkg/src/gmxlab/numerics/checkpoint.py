"""Flat binary parameter checkpoints.

Layout: magic bytes "GMX1", then one record per tensor: rank as u64 LE,
each dimension as u64 LE, then the raw float64 LE values. Records run to
end of file.
"""

import struct

import numpy as np

from ..errors import ConfigError

MAGIC = b"GMX1"


def save_params(path, params):
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        for p in params:
            arr = np.ascontiguousarray(np.asarray(p, dtype=np.float64))
            fh.write(struct.pack("<Q", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<Q", dim))
            fh.write(arr.astype("<f8").tobytes())


def load_params(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise ConfigError(f"{path}: not a GMX1 checkpoint")
    params = []
    offset = 4
    while offset < len(data):
        if offset + 8 > len(data):
            raise ConfigError(f"{path}: truncated tensor record")
        (rank,) = struct.unpack_from("<Q", data, offset)
        offset += 8
        if offset + 8 * rank > len(data):
            raise ConfigError(f"{path}: truncated dimension list")
        dims = struct.unpack_from(f"<{rank}Q", data, offset)
        offset += 8 * rank
        count = 1
        for d in dims:
            count *= d
        nbytes = 8 * count
        if offset + nbytes > len(data):
            raise ConfigError(f"{path}: truncated tensor payload")
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(dims)
        params.append(arr.astype(np.float64))
        offset += nbytes
    return params
