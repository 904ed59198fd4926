"""Small file helpers: 16-bit PGM images, atomic writes, CSV tables."""

from __future__ import annotations

import csv
import io
import os
import tempfile
from pathlib import Path

import numpy as np

__all__ = ["atomic_write", "write_pgm", "read_pgm", "scale_pair", "mask_to_pgm", "csv_text"]


def atomic_write(path, data):
    """Write ``data`` (str or bytes) to ``path`` via a temp file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("ascii")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def pgm_bytes(img, maxval=65535):
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError("PGM images are 2D")
    if np.any(img < 0) or np.any(img > maxval):
        raise ValueError("pixel values out of range")
    ny, nx = img.shape
    header = f"P5\n{nx} {ny}\n{maxval}\n".encode("ascii")
    dtype = ">u2" if maxval > 255 else "u1"
    return header + np.ascontiguousarray(img, dtype=dtype).tobytes()


def write_pgm(path, img, maxval=65535):
    atomic_write(path, pgm_bytes(img, maxval))


def read_pgm(path):
    """Read a binary (P5) PGM into an integer array of shape ``(rows, cols)``."""
    raw = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        start = pos
        while not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos].decode("ascii"))
    if tokens[0] != "P5":
        raise ValueError(f"{path}: not a binary PGM")
    nx, ny, maxval = (int(t) for t in tokens[1:])
    pos += 1
    dtype = ">u2" if maxval > 255 else "u1"
    return np.frombuffer(raw, dtype=dtype, count=nx * ny, offset=pos).reshape(ny, nx).astype(int)


def scale_pair(*images, maxval=65535):
    """Scale magnitude images with one shared factor so the overall max maps to ``maxval``."""
    top = max(float(np.max(im)) for im in images)
    if top == 0:
        return [np.zeros(np.shape(im), dtype=np.uint16) for im in images]
    return [np.rint(np.asarray(im) / top * maxval).astype(np.uint16) for im in images]


def mask_to_pgm(path, mask):
    write_pgm(path, np.asarray(mask, dtype=np.uint8) * 255, maxval=255)


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()
