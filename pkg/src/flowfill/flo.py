"""Middlebury ``.flo`` reader/writer.

Layout: float32 magic 202021.25, int32 width, int32 height, then
``width * height`` interleaved ``(u, v)`` float32 pairs, row-major, all
little-endian.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import DataError

FLO_MAGIC = 202021.25
_HEADER = np.dtype([("magic", "<f4"), ("width", "<i4"), ("height", "<i4")])


def encode_flo(flow) -> bytes:
    flow = np.asarray(flow)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise ValueError(f"flow must be (H, W, 2), got {flow.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        data = flow.astype("<f4")
    if not np.all(np.isfinite(data)):
        raise ValueError("refusing to write non-finite flow components")
    h, w = flow.shape[:2]
    header = np.array([(FLO_MAGIC, w, h)], dtype=_HEADER)
    return header.tobytes() + np.ascontiguousarray(data).tobytes()


def decode_flo(buf: bytes, name="<bytes>") -> np.ndarray:
    if len(buf) < _HEADER.itemsize:
        raise DataError(f"{name}: truncated .flo header")
    header = np.frombuffer(buf, dtype=_HEADER, count=1)[0]
    if header["magic"] != np.float32(FLO_MAGIC):
        raise DataError(f"{name}: bad .flo magic {header['magic']!r}")
    w, h = int(header["width"]), int(header["height"])
    if w <= 0 or h <= 0:
        raise DataError(f"{name}: invalid .flo size {w}x{h}")
    expected = _HEADER.itemsize + 8 * w * h
    if len(buf) != expected:
        raise DataError(f"{name}: expected {expected} bytes, found {len(buf)}")
    data = np.frombuffer(buf, dtype="<f4", offset=_HEADER.itemsize)
    return data.reshape(h, w, 2).astype(np.float32)


def write_flo(path, flow) -> None:
    buf = encode_flo(flow)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(buf)


def read_flo(path) -> np.ndarray:
    """Read a ``.flo`` file as a float32 ``(H, W, 2)`` array."""
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except FileNotFoundError as exc:
        raise DataError(f"flow file not found: {path}") from exc
    return decode_flo(buf, name=str(path))


def flo_name(source: int, target: int) -> str:
    return f"{source:05d}_{target:05d}.flo"
