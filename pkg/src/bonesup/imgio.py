"""Image file formats: 8-bit binary PGM (P5) and raw float32.

The raw format is little-endian: an 8-byte magic, uint32 height, uint32
width (16-byte header total), then row-major float32 pixels. Masks are
written as PGM with values {0, 255}.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

RAW_MAGIC = b"BSUPF32\x00"


def write_pgm(path, image: np.ndarray) -> None:
    """Quantize [0, 1] floats (or a bool mask) to 8 bits and write P5."""
    image = np.asarray(image)
    if image.dtype == bool:
        data = np.where(image, 255, 0).astype(np.uint8)
    elif image.dtype == np.uint8:
        data = image
    else:
        data = np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read an 8-bit P5 file back to floats in [0, 1]."""
    with open(path, "rb") as f:
        blob = f.read()
    if not blob.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    # Header: magic, width, height, maxval; '#' comments allowed.
    fields, pos = [], 2
    while len(fields) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if blob[pos : pos + 1] == b"#":
            pos = blob.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        fields.append(int(blob[start:pos]))
    pos += 1  # single whitespace after maxval
    w, h, maxval = fields
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    data = np.frombuffer(blob, dtype=np.uint8, count=h * w, offset=pos)
    if data.size != h * w:
        raise ValueError(f"{path}: truncated pixel data")
    return data.reshape(h, w).astype(np.float64) / 255.0


def read_pgm_mask(path) -> np.ndarray:
    """Read a 0/255 PGM as a boolean mask."""
    return read_pgm(path) > 0.5


def write_raw_f32(path, image: np.ndarray) -> None:
    image = np.asarray(image, dtype=np.float32)
    h, w = image.shape
    with open(path, "wb") as f:
        f.write(RAW_MAGIC)
        f.write(struct.pack("<II", h, w))
        f.write(image.astype("<f4").tobytes())


def read_raw_f32(path) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.read(16)
        if len(header) != 16 or header[:8] != RAW_MAGIC:
            raise ValueError(f"{path}: bad raw float32 header")
        h, w = struct.unpack("<II", header[8:])
        data = np.frombuffer(f.read(), dtype="<f4", count=h * w)
    if data.size != h * w:
        raise ValueError(f"{path}: truncated pixel data")
    return data.reshape(h, w).astype(np.float64)


def read_image(path) -> np.ndarray:
    """Dispatch on extension: .pgm -> PGM, anything else -> raw float32."""
    return read_pgm(path) if Path(path).suffix == ".pgm" else read_raw_f32(path)


def write_image(path, image: np.ndarray) -> None:
    if Path(path).suffix == ".pgm":
        write_pgm(path, image)
    else:
        write_raw_f32(path, image)
