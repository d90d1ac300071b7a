"""File formats: the flat binary container, PGM previews, JSON helpers.

Container layout, all little-endian:

    offset  size  field
    0       4     magic b"KCRM"
    4       2     format version (1)
    6       2     payload dtype: 8 = complex128, 4 = complex64
    8       2     mode tag index (see MODE_TAGS)
    10      2     number of k-space dimensions, ndim
    12      2     coil/channel count C
    14      2     reserved (0)
    16      4*n   ndim uint32 grid extents
    ...           payload: C x dims complex values, row-major (C-order),
                  channel-major

PGM previews are binary (P5) 8-bit; the log-magnitude variant windows
[max - `decades` decades, max], the usual way k-space magnitude is shown.
"""

from __future__ import annotations

import json
import struct

import numpy as np

__all__ = [
    "ContainerFormatError",
    "MODE_TAGS",
    "write_container",
    "read_container",
    "write_pgm",
    "write_pgm_log",
    "write_json",
    "read_json",
    "LOG_WINDOW_DECADES",
]

MAGIC = b"KCRM"
VERSION = 1
MODE_TAGS = ("generic", "discrete", "analytic", "coilmaps", "power", "matrix")
LOG_WINDOW_DECADES = 6.0


class ContainerFormatError(ValueError):
    """Raised when a container file is malformed."""


def write_container(path, array: np.ndarray, mode: str = "generic", single: bool = False):
    """Write a (C, *dims) complex array with its mode tag.

    ``single=True`` stores complex64 (half the size, display-grade only).
    """
    arr = np.asarray(array)
    if arr.ndim < 2:
        raise ValueError(f"need a (channels, *dims) array, got shape {arr.shape}")
    if mode not in MODE_TAGS:
        raise ValueError(f"unknown mode {mode!r}, expected one of {MODE_TAGS}")
    dtype = np.complex64 if single else np.complex128
    coils = arr.shape[0]
    dims = arr.shape[1:]
    header = struct.pack(
        "<4sHHHHHH",
        MAGIC,
        VERSION,
        dtype().itemsize // 2,
        MODE_TAGS.index(mode),
        len(dims),
        coils,
        0,
    )
    header += struct.pack(f"<{len(dims)}I", *dims)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(arr, dtype=dtype).tobytes())


def read_container(path):
    """Read a container; returns (array, mode). Arrays come back complex128."""
    with open(path, "rb") as fh:
        head = fh.read(16)
        if len(head) < 16 or head[:4] != MAGIC:
            raise ContainerFormatError(f"{path}: not a container file (bad magic)")
        _, version, itemhalf, mode_idx, ndim, coils, _ = struct.unpack("<4sHHHHHH", head)
        if version != VERSION:
            raise ContainerFormatError(f"{path}: unsupported version {version}")
        if itemhalf not in (4, 8):
            raise ContainerFormatError(f"{path}: unknown payload dtype code {itemhalf}")
        if mode_idx >= len(MODE_TAGS):
            raise ContainerFormatError(f"{path}: unknown mode index {mode_idx}")
        raw = fh.read(4 * ndim)
        if len(raw) < 4 * ndim:
            raise ContainerFormatError(f"{path}: truncated header")
        dims = struct.unpack(f"<{ndim}I", raw)
        dtype = np.complex128 if itemhalf == 8 else np.complex64
        count = coils * int(np.prod(dims))
        payload = fh.read()
    expected = count * np.dtype(dtype).itemsize
    if len(payload) != expected:
        raise ContainerFormatError(
            f"{path}: payload is {len(payload)} bytes, expected {expected}"
        )
    arr = np.frombuffer(payload, dtype=np.dtype(dtype).newbyteorder("<"), count=count)
    return (
        arr.reshape((coils,) + dims).astype(np.complex128),
        MODE_TAGS[mode_idx],
    )


def write_pgm(path, image: np.ndarray):
    """8-bit binary PGM of a real 2-d array, min-max scaled."""
    img = np.asarray(image, dtype=float)
    if img.ndim != 2:
        raise ValueError(f"PGM needs a 2-d array, got shape {img.shape}")
    lo, hi = float(img.min()), float(img.max())
    span = hi - lo if hi > lo else 1.0
    quant = np.clip(np.round((img - lo) / span * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        fh.write(quant.tobytes())


def write_pgm_log(path, magnitude: np.ndarray, decades: float = LOG_WINDOW_DECADES):
    """Log-magnitude PGM windowed to [max - decades, max] in log10 units."""
    mag = np.abs(np.asarray(magnitude, dtype=complex))
    peak = float(mag.max())
    if peak <= 0.0:
        write_pgm(path, np.zeros(mag.shape))
        return
    floor = peak * 10.0 ** (-decades)
    logged = np.log10(np.maximum(mag, floor))
    write_pgm(path, logged)


def write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
