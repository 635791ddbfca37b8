"""Self-describing binary container for named float64 arrays.

Layout: 8 magic bytes, a little-endian uint32 header length, a UTF-8 JSON
header, then every array as little-endian float64 in header order.
"""
import json
import struct

import numpy as np

from .errors import MissingArtifact, SchemaError

MAGIC = b"SHBTCKPT"
FORMAT_VERSION = 1


def dumps(params, stage, config_hash="", meta=None):
    """Serialize ``params`` (name to array) to bytes; names are written sorted."""
    entries, blobs, offset = [], [], 0
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    header = {"format_version": FORMAT_VERSION, "stage": stage, "config_hash": config_hash,
              "meta": meta or {}, "params": entries, "n_bytes": offset}
    raw = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<I", len(raw)) + raw + b"".join(blobs)


def loads(buf):
    """Inverse of :func:`dumps`; returns ``(params, header)``."""
    if buf[:len(MAGIC)] != MAGIC:
        raise SchemaError("not a checkpoint file (bad magic bytes)")
    (n,) = struct.unpack("<I", buf[len(MAGIC):len(MAGIC) + 4])
    start = len(MAGIC) + 4
    header = json.loads(buf[start:start + n].decode("utf-8"))
    body = memoryview(buf)[start + n:]
    if len(body) != header["n_bytes"]:
        raise SchemaError(f"checkpoint body has {len(body)} bytes, header says {header['n_bytes']}")
    params = {}
    for e in header["params"]:
        count = int(np.prod(e["shape"], dtype=np.int64))
        arr = np.frombuffer(body, dtype="<f8", count=count, offset=e["offset"])
        params[e["name"]] = arr.astype(np.float64).reshape(e["shape"])
    return params, header


def save(path, params, stage, config_hash="", meta=None):
    with open(path, "wb") as fh:
        fh.write(dumps(params, stage, config_hash, meta))


def load(path):
    try:
        with open(path, "rb") as fh:
            return loads(fh.read())
    except FileNotFoundError as exc:
        raise MissingArtifact(f"checkpoint not found: {path}") from exc
