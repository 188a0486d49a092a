"""Portable container for named arrays plus a JSON manifest.

Layout (all integers little-endian)::

    b"URCN1" | uint64 header length | UTF-8 JSON header | zero padding | payload

The header lists every array with its dtype, shape and byte offset relative
to the payload start. Payload offsets are 8-byte aligned.
"""
from __future__ import annotations

import json
import re
import struct

import numpy as np

from .errors import ShapeError

MAGIC = b"URCN1"
ALIGN = 8
DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8"), "bool": np.dtype("|b1")}


def _dtype_code(arr):
    kind, size = arr.dtype.kind, arr.dtype.itemsize
    if kind == "b":
        return "bool"
    if kind == "f" and size in (4, 8):
        return "f32" if size == 4 else "f64"
    raise TypeError(f"unsupported dtype {arr.dtype}; use float32, float64 or bool")


def _pad(n):
    return (-n) % ALIGN


def to_bytes(arrays, attrs=None):
    """Serialize ``{name: array}`` and a JSON-compatible ``attrs`` dict."""
    entries = []
    chunks = []
    offset = 0
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        code = _dtype_code(arr)
        buf = np.ascontiguousarray(arr, dtype=DTYPES[code]).tobytes()
        entries.append({"name": name, "dtype": code, "shape": list(arr.shape),
                        "offset": offset, "nbytes": len(buf)})
        chunks.append(buf + b"\0" * _pad(len(buf)))
        offset += len(buf) + _pad(len(buf))
    header = json.dumps({"arrays": entries, "attrs": attrs or {}}, sort_keys=True,
                        separators=(",", ":")).encode("utf-8")
    prefix_len = len(MAGIC) + 8 + len(header)
    return b"".join([MAGIC, struct.pack("<Q", len(header)), header, b"\0" * _pad(prefix_len), *chunks])


def from_bytes(blob):
    """Inverse of :func:`to_bytes`; returns ``(arrays, attrs)``."""
    if blob[:len(MAGIC)] != MAGIC:
        raise ValueError("not a URCN1 container (bad magic)")
    (hlen,) = struct.unpack("<Q", blob[len(MAGIC):len(MAGIC) + 8])
    start = len(MAGIC) + 8
    header = json.loads(blob[start:start + hlen].decode("utf-8"))
    base = start + hlen
    base += _pad(base)
    arrays = {}
    for e in header["arrays"]:
        dt = DTYPES[e["dtype"]]
        shape = tuple(e["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        if count * dt.itemsize != e["nbytes"]:
            raise ShapeError(f"{e['name']}: byte count does not match shape {shape}")
        lo = base + e["offset"]
        if lo + e["nbytes"] > len(blob):
            raise ValueError(f"{e['name']}: payload truncated")
        arrays[e["name"]] = np.frombuffer(blob, dtype=dt, count=count, offset=lo).reshape(shape).copy()
    return arrays, header["attrs"]


def write(path, arrays, attrs=None):
    blob = to_bytes(arrays, attrs)
    try:
        with open(path, "wb") as fh:
            fh.write(blob)
    except OSError as exc:
        raise OSError(f"cannot write container {path}: {exc}") from exc


def read(path):
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise OSError(f"cannot read container {path}: {exc}") from exc
    return from_bytes(blob)


def write_pgm(path, image):
    """8-bit binary PGM of ``|image|`` scaled so its maximum maps to 255."""
    img = np.asarray(image)
    if img.ndim == 3:
        img = np.sqrt(np.sum(img * img, axis=-1)) if img.shape[-1] > 1 else img[..., 0]
    if img.ndim != 2:
        raise ShapeError(f"PGM export needs a 2-D image, got shape {img.shape}")
    mag = np.abs(img)
    peak = float(mag.max()) if mag.size else 0.0
    scaled = np.zeros(mag.shape, np.uint8) if peak == 0 else np.round(255.0 * mag / peak).astype(np.uint8)
    h, w = scaled.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(scaled.tobytes())


def read_pgm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", data)
    if m is None:
        raise ValueError("not a binary PGM")
    w, h = int(m.group(1)), int(m.group(2))
    return np.frombuffer(data, dtype=np.uint8, count=w * h, offset=m.end()).reshape(h, w)
