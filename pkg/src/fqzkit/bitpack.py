"""Varint (unsigned LEB128) and bit-packing helpers shared by the segmenters.

Scalar helpers are used on short header-like data; the ``*_array`` variants
are numpy-vectorized for whole-chunk streams.
"""
from __future__ import annotations

from typing import Iterable

import numpy as np

from .errors import CorruptionError


def encode_varint(value: int) -> bytes:
    if value < 0:
        raise ValueError("varint must be non-negative")
    out = bytearray()
    while value >= 0x80:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    out.append(value)
    return bytes(out)


def decode_varint(buf, pos: int = 0) -> tuple[int, int]:
    """Return ``(value, next_pos)``; raises CorruptionError on truncation."""
    result = 0
    shift = 0
    n = len(buf)
    while True:
        if pos >= n:
            raise CorruptionError("truncated varint")
        b = buf[pos]
        pos += 1
        result |= (b & 0x7F) << shift
        if b < 0x80:
            return result, pos
        shift += 7
        if shift > 63:
            raise CorruptionError("varint longer than 64 bits")


def encode_varint_array(values: Iterable[int] | np.ndarray) -> bytes:
    v = np.asarray(values, dtype=np.uint64)
    if v.size == 0:
        return b""
    nbytes = np.ones(v.size, dtype=np.int64)
    for b in range(1, 10):
        nbytes += (v >> np.uint64(7 * b)) > 0
    starts = np.zeros(v.size, dtype=np.int64)
    np.cumsum(nbytes[:-1], out=starts[1:])
    out = np.empty(int(nbytes.sum()), dtype=np.uint8)
    for b in range(int(nbytes.max())):
        sel = nbytes > b
        group = ((v[sel] >> np.uint64(7 * b)) & np.uint64(0x7F)).astype(np.uint8)
        group[nbytes[sel] > b + 1] |= 0x80
        out[starts[sel] + b] = group
    return out.tobytes()


def decode_varint_array(buf: bytes, count: int) -> np.ndarray:
    """Decode exactly ``count`` varints that must fill ``buf`` completely."""
    raw = np.frombuffer(buf, dtype=np.uint8)
    if count == 0:
        if raw.size:
            raise CorruptionError("trailing bytes after varint stream")
        return np.zeros(0, dtype=np.uint64)
    ends = np.flatnonzero(raw < 0x80)
    if ends.size != count or ends[-1] != raw.size - 1:
        raise CorruptionError(
            f"varint stream holds {ends.size} values, expected {count}")
    starts = np.empty_like(ends)
    starts[0] = 0
    starts[1:] = ends[:-1] + 1
    if int((ends - starts).max()) > 9:
        raise CorruptionError("varint longer than 64 bits")
    owner = np.repeat(np.arange(count), ends - starts + 1)
    shift = (np.arange(raw.size) - starts[owner]) * 7
    parts = (raw & 0x7F).astype(np.uint64) << shift.astype(np.uint64)
    return np.add.reduceat(parts, starts)


def pack_bits(bits: np.ndarray | bytes | Iterable[int]) -> bytes:
    """Pack a 0/1 sequence MSB-first; the final byte is zero padded."""
    arr = np.frombuffer(bits, dtype=np.uint8) if isinstance(bits, (bytes, bytearray)) \
        else np.asarray(bits, dtype=np.uint8)
    return np.packbits(arr).tobytes()


def unpack_bits(data: bytes, nbits: int) -> np.ndarray:
    if nbits > len(data) * 8 or len(data) != (nbits + 7) // 8:
        raise CorruptionError(
            f"bit field of {len(data)} bytes cannot hold exactly {nbits} bits")
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8), count=nbits)
