"""File formats: PGM for viewing, raw float32 + JSON sidecar for exact I/O.

The raw format is little-endian float32, row-major, with a sidecar
``<name>.json`` holding ``{"height": H, "width": W}`` (plus ``"components"``
for vector fields).  PGM is binary P5, 8- or 16-bit, mapping [-1, 1] to the
full integer range; it is lossy and meant for eyeballing only.
"""

import json
from pathlib import Path

import numpy as np

from .errors import ShapeMismatch


def _sidecar(path):
    path = Path(path)
    return path.with_suffix(path.suffix + ".json") if path.suffix != ".raw" else path.with_suffix(".json")


def write_raw(path, array):
    """Write a float array (2-D image or (H, W, 2) field) plus JSON sidecar."""
    path = Path(path)
    array = np.asarray(array, dtype="<f4")
    if array.ndim == 2:
        header = {"height": int(array.shape[0]), "width": int(array.shape[1])}
    elif array.ndim == 3 and array.shape[2] == 2:
        header = {"height": int(array.shape[0]), "width": int(array.shape[1]), "components": 2}
    else:
        raise ShapeMismatch(f"expected (H, W) or (H, W, 2), got {array.shape}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(array.tobytes())
    _sidecar(path).write_text(json.dumps(header, sort_keys=True) + "\n")


def read_raw(path):
    """Read a raw float array written by write_raw; returns float64."""
    path = Path(path)
    header = json.loads(_sidecar(path).read_text())
    h, w = header["height"], header["width"]
    comps = header.get("components", 1)
    data = np.frombuffer(path.read_bytes(), dtype="<f4")
    if comps == 1:
        return data.reshape(h, w).astype(np.float64)
    return data.reshape(h, w, comps).astype(np.float64)


def write_pgm(path, image, bits=8):
    """Write a [-1, 1] image as binary PGM (P5), 8- or 16-bit."""
    if bits not in (8, 16):
        raise ValueError("bits must be 8 or 16")
    image = np.asarray(image, dtype=np.float64)
    maxval = 255 if bits == 8 else 65535
    q = np.rint((np.clip(image, -1.0, 1.0) + 1.0) / 2.0 * maxval).astype(np.uint32)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = f"P5\n{image.shape[1]} {image.shape[0]}\n{maxval}\n".encode("ascii")
    if bits == 8:
        body = q.astype(np.uint8).tobytes()
    else:
        body = q.astype(">u2").tobytes()  # PGM 16-bit is big-endian
    path.write_bytes(header + body)


def read_pgm(path):
    """Read a binary PGM back to a [-1, 1] float image."""
    data = Path(path).read_bytes()
    if not data.startswith(b"P5"):
        raise ValueError("only binary P5 PGM is supported")
    # Header: magic, width, height, maxval, separated by whitespace/comments.
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while data[pos : pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(int(data[start:pos]))
    pos += 1  # single whitespace after maxval
    w, h, maxval = fields
    if maxval <= 255:
        arr = np.frombuffer(data, dtype=np.uint8, count=h * w, offset=pos)
    else:
        arr = np.frombuffer(data, dtype=">u2", count=h * w, offset=pos)
    return arr.reshape(h, w).astype(np.float64) / maxval * 2.0 - 1.0


def write_mask_pgm(path, mask):
    write_pgm(path, np.where(np.asarray(mask, bool), 1.0, -1.0), bits=8)


def read_mask_pgm(path):
    return read_pgm(path) > 0.0


def write_trace_csv(path, trace):
    """Write an iteration-loss trace as ``step,loss`` CSV."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["step,loss"]
    lines += [f"{i},{float(v)!r}" for i, v in enumerate(trace)]
    path.write_text("\n".join(lines) + "\n")


def read_trace_csv(path):
    lines = Path(path).read_text().strip().splitlines()[1:]
    return [float(line.split(",")[1]) for line in lines]
