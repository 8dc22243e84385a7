"""GRF1 binary container for lattice field samples.

Layout, all little-endian: ``b"GRF1"``, u16 version, u8 dimension, one u64
point count per axis, one f64 spacing per axis, u64 seed, 32-byte covariance
fingerprint, then the f64 values in row-major order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .fieldgen import FieldSample, GridError, GridSpec

MAGIC = b"GRF1"
VERSION = 1
FINGERPRINT_BYTES = 32


class FormatError(ValueError):
    pass


def header_size(d: int) -> int:
    return 4 + 2 + 1 + 16 * d + 8 + FINGERPRINT_BYTES


def encode(sample: FieldSample) -> bytes:
    grid = sample.grid
    d = grid.dimension
    fp = bytes(sample.fingerprint)
    if len(fp) != FINGERPRINT_BYTES:
        raise ValueError("fingerprint must be 32 bytes")
    head = struct.pack("<4sHB", MAGIC, VERSION, d)
    head += struct.pack(f"<{d}Q", *grid.shape)
    head += struct.pack(f"<{d}d", *([grid.spacing] * d))
    head += struct.pack("<Q", sample.seed)
    payload = np.ascontiguousarray(sample.values, dtype="<f8").tobytes(order="C")
    return head + fp + payload


def decode(blob: bytes) -> FieldSample:
    if len(blob) < 7 or blob[:4] != MAGIC:
        raise FormatError("bad magic: not a GRF1 file")
    version, d = struct.unpack_from("<HB", blob, 4)
    if version != VERSION:
        raise FormatError(f"unsupported GRF1 version {version}")
    if d not in (1, 2, 3):
        raise FormatError(f"unsupported dimension {d}")
    if len(blob) < header_size(d):
        raise FormatError("truncated header")
    off = 7
    counts = struct.unpack_from(f"<{d}Q", blob, off)
    off += 8 * d
    spacings = struct.unpack_from(f"<{d}d", blob, off)
    off += 8 * d
    (seed,) = struct.unpack_from("<Q", blob, off)
    off += 8
    fingerprint = blob[off:off + FINGERPRINT_BYTES]
    off += FINGERPRINT_BYTES
    n = int(np.prod(counts, dtype=object))
    if len(blob) - off != 8 * n:
        raise FormatError(f"payload length mismatch: expected {8 * n} bytes, found {len(blob) - off}")
    if len(set(spacings)) != 1:
        raise FormatError("anisotropic spacing is not supported")
    spacing = spacings[0]
    if min(counts) < 2:
        raise FormatError("every axis needs at least two points")
    try:
        grid = GridSpec(d, tuple((c - 1) * spacing / 2 for c in counts), spacing)
    except GridError as exc:
        raise FormatError(f"invalid grid in header: {exc}") from exc
    if grid.shape != tuple(counts):
        raise FormatError("header counts are inconsistent with the spacing")
    values = np.frombuffer(blob, dtype="<f8", count=n, offset=off).reshape(counts).astype(float)
    return FieldSample(grid, values, seed, bytes(fingerprint))


def write_field(path, sample: FieldSample) -> None:
    Path(path).write_bytes(encode(sample))


def read_field(path) -> FieldSample:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    return decode(blob)
