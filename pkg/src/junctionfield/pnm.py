"""Minimal PGM/PPM codec (ASCII P2/P3 read, binary P5/P6 read and write).

Binary samples above 255 are 16-bit big-endian, as the format requires.
"""
from __future__ import annotations

import re
from pathlib import Path
from typing import Tuple, Union

import numpy as np

PathLike = Union[str, Path]
_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _header(buf: bytes, n: int) -> Tuple[list, int]:
    out, pos = [], 0
    for _ in range(n):
        m = _TOKEN.match(buf, pos)
        if not m:
            raise ValueError("truncated PNM header")
        out.append(m.group(1))
        pos = m.end()
    return out, pos


def decode(buf: bytes) -> Tuple[np.ndarray, int]:
    """Raw samples (H, W) or (H, W, 3) as integers, and the maxval."""
    (magic, w, h, maxval), pos = _header(buf, 4)
    magic = magic.decode("ascii", "replace")
    if magic not in ("P2", "P3", "P5", "P6"):
        raise ValueError(f"unsupported PNM type {magic!r}")
    w, h, maxval = int(w), int(h), int(maxval)
    if w <= 0 or h <= 0 or not 0 < maxval < 65536:
        raise ValueError("bad PNM dimensions or maxval")
    ch = 3 if magic in ("P3", "P6") else 1
    count = w * h * ch
    if magic in ("P2", "P3"):
        vals = np.array(buf[pos:].split()[:count], dtype=np.int64)
    else:
        dt = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        start = pos + 1  # single whitespace byte after maxval
        vals = np.frombuffer(buf, dtype=dt, count=count, offset=start).astype(np.int64) \
            if len(buf) - start >= count * dt.itemsize else np.empty(0)
    if vals.size != count:
        raise ValueError("truncated PNM data")
    if vals.max(initial=0) > maxval:
        raise ValueError("sample exceeds maxval")
    shape = (h, w) if ch == 1 else (h, w, 3)
    return vals.reshape(shape), maxval


def read(path: PathLike) -> np.ndarray:
    """Image scaled to [0, 1], shape (H, W) or (H, W, 3)."""
    vals, maxval = decode(Path(path).read_bytes())
    return vals / float(maxval)


def encode(samples: np.ndarray, maxval: int) -> bytes:
    a = np.asarray(samples)
    if a.ndim == 3 and a.shape[2] == 1:
        a = a[:, :, 0]
    if a.ndim == 2:
        magic = b"P5"
    elif a.ndim == 3 and a.shape[2] == 3:
        magic = b"P6"
    else:
        raise ValueError(f"cannot store shape {a.shape} as PGM/PPM")
    h, w = a.shape[:2]
    dt = ">u2" if maxval > 255 else "u1"
    return b"%s\n%d %d\n%d\n" % (magic, w, h, maxval) + a.astype(dt).tobytes()


def quantize(img: np.ndarray, maxval: int) -> np.ndarray:
    """round(maxval * clip(img, 0, 1)) as integers."""
    return np.rint(np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0) * maxval).astype(np.int64)


def write(path: PathLike, img: np.ndarray, bits: int = 8) -> None:
    """Store a [0, 1] image with 8 or 16 bits per sample."""
    if bits not in (8, 16):
        raise ValueError("bits must be 8 or 16")
    maxval = 255 if bits == 8 else 65535
    Path(path).write_bytes(encode(quantize(img, maxval), maxval))
