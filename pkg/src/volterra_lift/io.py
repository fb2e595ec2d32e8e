"""Binary ensemble dumps and JSON result records.

SVEE layout (all little-endian)::

    magic   4 bytes  b"SVEE"
    version u32      1
    ndim    u32      3
    shape   ndim x u64   (paths, times, dim)
    data    prod(shape) x f64, row-major path x time x dim
"""

import json
import struct

import numpy as np

from .sve import MCEstimate

SVEE_MAGIC = b"SVEE"
SVEE_VERSION = 1


def write_svee(path, X):
    X = np.ascontiguousarray(X, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(SVEE_MAGIC)
        fh.write(struct.pack("<II", SVEE_VERSION, X.ndim))
        fh.write(struct.pack(f"<{X.ndim}Q", *X.shape))
        fh.write(X.tobytes())


def read_svee(path):
    with open(path, "rb") as fh:
        if fh.read(4) != SVEE_MAGIC:
            raise ValueError(f"{path}: not an SVEE file")
        version, ndim = struct.unpack("<II", fh.read(8))
        if version != SVEE_VERSION:
            raise ValueError(f"{path}: unsupported SVEE version {version}")
        shape = struct.unpack(f"<{ndim}Q", fh.read(8 * ndim))
        data = np.frombuffer(fh.read(), dtype="<f8")
    return data.reshape(shape)


def _plain(v):
    if isinstance(v, MCEstimate):
        return v.as_dict()
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return _plain(v.tolist())
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    return v


def record(operation, params, estimate, std_error=None, per_term=None):
    """JSON-ready result record."""
    if isinstance(estimate, MCEstimate):
        estimate, std_error = estimate.mean, estimate.std_error
    return {"operation": operation, "params": _plain(params), "estimate": _plain(estimate),
            "std_error": _plain(std_error), "per_term": _plain(per_term or {})}


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_plain(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_table(path, header, rows):
    """CSV with full float precision."""
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)
                              for v in row) + "\n")
