"""Sequential inner loops compiled with numba.

Each kernel has a pure-Python twin used when numba is unavailable; the twins
are also what the tests compare the compiled versions against.
"""
from __future__ import annotations

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def fnv1a64_py(data: bytes, h: int = FNV_OFFSET) -> int:
    for b in data:
        h = ((h ^ b) * FNV_PRIME) & _MASK64
    return h


def huffman_decode_py(bits: np.ndarray, n_out: int, peek_bits: int,
                      lut_sym: np.ndarray, lut_len: np.ndarray) -> tuple[np.ndarray, int]:
    """Table-driven decode; returns ``(symbols, bits_consumed)`` or ``consumed=-1`` on error."""
    out = np.empty(n_out, dtype=np.uint8)
    nbits = bits.size
    pos = 0
    for i in range(n_out):
        w = 0
        for b in range(peek_bits):
            w <<= 1
            if pos + b < nbits:
                w |= int(bits[pos + b])
        ln = int(lut_len[w])
        if ln == 0 or pos + ln > nbits:
            return out, -1
        out[i] = lut_sym[w]
        pos += ln
    return out, pos


if numba is not None:
    @numba.njit(cache=True)
    def _fnv1a64_nb(arr, h):
        prime = np.uint64(FNV_PRIME)
        for i in range(arr.size):
            h = (h ^ np.uint64(arr[i])) * prime
        return h

    @numba.njit(cache=True)
    def _huffman_decode_nb(bits, n_out, peek_bits, lut_sym, lut_len):
        out = np.empty(n_out, dtype=np.uint8)
        nbits = bits.size
        pos = 0
        for i in range(n_out):
            w = 0
            for b in range(peek_bits):
                w <<= 1
                if pos + b < nbits:
                    w |= bits[pos + b]
            ln = lut_len[w]
            if ln == 0 or pos + ln > nbits:
                return out, -1
            out[i] = lut_sym[w]
            pos += ln
        return out, pos

    def fnv1a64(data: bytes, h: int = FNV_OFFSET) -> int:
        arr = np.frombuffer(data, dtype=np.uint8)
        return int(_fnv1a64_nb(arr, np.uint64(h)))

    def huffman_decode(bits, n_out, peek_bits, lut_sym, lut_len):
        return _huffman_decode_nb(bits, n_out, peek_bits, lut_sym, lut_len)
else:  # pragma: no cover
    fnv1a64 = fnv1a64_py
    huffman_decode = huffman_decode_py
