"""File formats: PSDM binary matrices and strict JSON configs.

A PSDM file is the 4-byte magic ``b"PSDM"``, two little-endian ``uint32``
values (rows, cols) and ``rows * cols`` little-endian float64 values in
row-major order.
"""

import json
import math
import os
import struct

import numpy as np

from .errors import ConfigurationError

__all__ = ["MAGIC", "INLINE_LIMIT", "write_matrix", "read_matrix", "load_json",
           "check_keys", "resolve_matrix", "dumps", "write_json", "fmt_float"]

MAGIC = b"PSDM"
INLINE_LIMIT = 100
_HEADER = struct.Struct("<4sII")


def write_matrix(path, M):
    """Write a vector (as a column) or matrix in PSDM format."""
    M = np.asarray(M, dtype="<f8")
    if M.ndim == 1:
        M = M[:, None]
    if M.ndim != 2:
        raise ConfigurationError("PSDM stores 1-D or 2-D arrays, got %d-D" % M.ndim)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, M.shape[0], M.shape[1]))
        fh.write(np.ascontiguousarray(M).tobytes())


def read_matrix(path):
    """Read a PSDM file into a 2-D float64 array."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigurationError("cannot read matrix file %s: %s" % (path, exc.strerror))
    if len(raw) < _HEADER.size:
        raise ConfigurationError("%s: truncated PSDM header" % path)
    magic, rows, cols = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ConfigurationError("%s: bad magic %r (expected %r)" % (path, magic, MAGIC))
    body = raw[_HEADER.size:]
    if len(body) != 8 * rows * cols:
        raise ConfigurationError("%s: expected %d values, found %d bytes"
                                 % (path, rows * cols, len(body)))
    return np.frombuffer(body, dtype="<f8").reshape(rows, cols).astype(float)


def load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigurationError("cannot read config %s: %s" % (path, exc.strerror))
    except json.JSONDecodeError as exc:
        raise ConfigurationError("%s: line %d column %d: %s"
                                 % (path, exc.lineno, exc.colno, exc.msg))


def check_keys(obj, allowed, where="config", required=()):
    """Reject unknown keys and report missing ones with their location."""
    if not isinstance(obj, dict):
        raise ConfigurationError("%s: expected an object" % where)
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        raise ConfigurationError("%s: unknown key(s) %s" % (where, ", ".join(unknown)))
    missing = [k for k in required if k not in obj]
    if missing:
        raise ConfigurationError("%s: missing key(s) %s" % (where, ", ".join(missing)))


def resolve_matrix(value, base_dir=".", where="matrix"):
    """Inline nested list (at most 100 numbers) or a PSDM file reference.

    File references are either a string path or ``{"file": path}``; relative
    paths are taken relative to ``base_dir``.
    """
    if isinstance(value, dict):
        check_keys(value, ("file",), where, required=("file",))
        value = value["file"]
    if isinstance(value, str):
        path = value if os.path.isabs(value) else os.path.join(base_dir, value)
        if not os.path.exists(path):
            raise ConfigurationError("%s: matrix file %s does not exist" % (where, path))
        return read_matrix(path)
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigurationError("%s: not a numeric array" % where)
    if arr.size > INLINE_LIMIT:
        raise ConfigurationError("%s: %d inline numbers exceed the limit of %d; "
                                 "use a file reference" % (where, arr.size, INLINE_LIMIT))
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError("%s: non-finite entries" % where)
    return arr


def fmt_float(v):
    if math.isnan(v):
        return "NaN"
    if math.isinf(v):
        return "Infinity" if v > 0 else "-Infinity"
    return "%.17g" % v


def dumps(obj, indent=2, _level=0):
    """JSON text with every float written at 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, (bool, np.bool_)) or obj is None:
        return json.dumps(bool(obj) if obj is not None else None)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [dumps(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(pad + s for s in items) + "\n" + end + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = ["%s: %s" % (json.dumps(str(k)), dumps(v, indent, _level + 1))
                 for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))]
        return "{\n" + ",\n".join(pad + s for s in items) + "\n" + end + "}"
    raise TypeError("cannot serialize %r" % type(obj))


def write_json(path, obj):
    with open(path, "w") as fh:
        fh.write(dumps(obj) + "\n")
