"""Byte-stream codecs, the per-field fallback rule and score-based codec selection.

Codec classes and their bindings:

========  ===============  =============================================
id        class            backend
========  ===============  =============================================
0         STORE            identity
1         RLE              (byte, varint run length) pairs
2         FAST_GENERAL     zstandard, no frame checksum / content size
3         STRONG_BWT       bzip2 (Burrows-Wheeler block sorting)
4         STRONG_CM        PPMd variant I (context modeling)
========  ===============  =============================================
"""
from __future__ import annotations

import bz2
import enum
import time
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

import numpy as np
import pyppmd
import zstandard

from .bitpack import decode_varint_array, encode_varint_array
from .errors import CorruptionError

REGISTRY_VERSION = 1
DEFAULT_LAMBDA = 0.1
DEFAULT_SAMPLE_BYTES = 1 << 20


class CodecKind(enum.IntEnum):
    STORE = 0
    RLE = 1
    FAST_GENERAL = 2
    STRONG_BWT = 3
    STRONG_CM = 4


@dataclass(frozen=True, order=True)
class CodecId:
    kind: CodecKind
    level: int = 0

    def __post_init__(self):
        if self.kind in (CodecKind.STORE, CodecKind.RLE) and self.level != 0:
            object.__setattr__(self, "level", 0)

    def to_bytes(self) -> bytes:
        return bytes([int(self.kind), self.level])

    @classmethod
    def from_bytes(cls, data: bytes) -> "CodecId":
        try:
            cid = cls(CodecKind(data[0]), data[1])
        except ValueError as exc:
            raise CorruptionError(f"unknown codec id {data[0]}") from exc
        if cid not in REGISTRY and cid.kind is not CodecKind.STORE:
            raise CorruptionError(f"codec {cid} not in registry")
        return cid

    def __str__(self) -> str:
        if self.kind in (CodecKind.STORE, CodecKind.RLE):
            return self.kind.name
        return f"{self.kind.name}:{self.level}"

    @classmethod
    def parse(cls, text: str) -> "CodecId":
        name, _, level = text.partition(":")
        kind = CodecKind[name.strip().upper()]
        if level:
            cid = cls(kind, int(level))
        else:
            cid = next(c for c in REGISTRY if c.kind is kind)
        if cid not in REGISTRY:
            raise ValueError(f"{text}: not a registered codec/level")
        return cid


STORE = CodecId(CodecKind.STORE)

# Fixed (id, level) table; order is the tie-break order, cheapest first.
REGISTRY: tuple[CodecId, ...] = (
    STORE,
    CodecId(CodecKind.RLE),
    CodecId(CodecKind.FAST_GENERAL, 3),
    CodecId(CodecKind.FAST_GENERAL, 19),
    CodecId(CodecKind.STRONG_BWT, 9),
    CodecId(CodecKind.STRONG_CM, 6),
)

# Nominal cost in seconds per MB of input, used as the time term of the score
# so that plan selection is deterministic.
NOMINAL_SECONDS_PER_MB = {
    STORE: 0.0,
    CodecId(CodecKind.RLE): 0.01,
    CodecId(CodecKind.FAST_GENERAL, 3): 0.005,
    CodecId(CodecKind.FAST_GENERAL, 19): 0.5,
    CodecId(CodecKind.STRONG_BWT, 9): 0.12,
    CodecId(CodecKind.STRONG_CM, 6): 0.4,
}


def rle_encode(data: bytes) -> bytes:
    arr = np.frombuffer(data, dtype=np.uint8)
    if arr.size == 0:
        return b""
    starts = np.flatnonzero(np.concatenate([[True], arr[1:] != arr[:-1]]))
    runs = np.diff(np.append(starts, arr.size))
    values = arr[starts]
    run_bytes = np.frombuffer(encode_varint_array(runs), dtype=np.uint8)
    # Interleave value bytes before each run-length varint.
    run_len = np.ones(runs.size, dtype=np.int64)
    for b in range(1, 10):
        run_len += runs >= (1 << (7 * b))
    out = np.empty(values.size + run_bytes.size, dtype=np.uint8)
    value_pos = np.concatenate([[0], np.cumsum(run_len + 1)[:-1]])
    out[value_pos] = values
    mask = np.ones(out.size, dtype=bool)
    mask[value_pos] = False
    out[mask] = run_bytes
    return out.tobytes()


def rle_decode(data: bytes) -> bytes:
    arr = np.frombuffer(data, dtype=np.uint8)
    if arr.size == 0:
        return b""
    values, runs = [], []
    # A value byte is followed by a varint; walk the varint terminators.
    pos = 0
    n = arr.size
    terminators = np.flatnonzero(arr < 0x80)
    t_iter = 0
    while pos < n:
        values.append(arr[pos])
        start = pos + 1
        t_iter = np.searchsorted(terminators, start, side="left")
        if t_iter >= terminators.size:
            raise CorruptionError("truncated RLE run length")
        end = int(terminators[t_iter])
        runs.append(bytes(arr[start:end + 1]))
        pos = end + 1
    lengths = decode_varint_array(b"".join(runs), len(runs))
    if lengths.size and int(lengths.min()) == 0:
        raise CorruptionError("zero-length RLE run")
    return np.repeat(np.asarray(values, dtype=np.uint8), lengths.astype(np.int64)).tobytes()


def _ppmd_order(level: int) -> int:
    return max(2, min(16, level))


def encode_stream(data: bytes, codec: CodecId) -> bytes:
    if not data:
        return b""
    kind = codec.kind
    if kind is CodecKind.STORE:
        return bytes(data)
    if kind is CodecKind.RLE:
        return rle_encode(data)
    if kind is CodecKind.FAST_GENERAL:
        params = zstandard.ZstdCompressionParameters.from_level(
            codec.level, write_checksum=False, write_content_size=False, write_dict_id=False)
        return zstandard.ZstdCompressor(compression_params=params).compress(data)
    if kind is CodecKind.STRONG_BWT:
        return bz2.compress(data, codec.level)
    if kind is CodecKind.STRONG_CM:
        return pyppmd.compress(data, max_order=_ppmd_order(codec.level), mem_size=16 << 20,
                               variant="I")
    raise ValueError(f"unsupported codec {codec}")


def decode_stream(data: bytes, codec: CodecId, expected_len: int | None = None) -> bytes:
    try:
        if not data:
            out = b""
        elif codec.kind is CodecKind.STORE:
            out = bytes(data)
        elif codec.kind is CodecKind.RLE:
            out = rle_decode(data)
        elif codec.kind is CodecKind.FAST_GENERAL:
            dobj = zstandard.ZstdDecompressor().decompressobj()
            out = dobj.decompress(data)
            if not dobj.eof:
                raise CorruptionError("truncated zstd frame")
        elif codec.kind is CodecKind.STRONG_BWT:
            out = bz2.decompress(data)
        elif codec.kind is CodecKind.STRONG_CM:
            out = pyppmd.decompress(data, max_order=_ppmd_order(codec.level), mem_size=16 << 20,
                                    variant="I")
        else:
            raise CorruptionError(f"unsupported codec {codec}")
    except CorruptionError:
        raise
    except Exception as exc:
        raise CorruptionError(f"{codec} stream failed to decode: {exc}") from exc
    if expected_len is not None and len(out) != expected_len:
        raise CorruptionError(f"{codec} stream decoded to {len(out)} bytes, expected {expected_len}")
    return out


def maybe_encode(data: bytes, codec: CodecId) -> tuple[bytes, CodecId]:
    """Encode, falling back to STORE when the codec does not shrink the data."""
    if not data or codec.kind is CodecKind.STORE:
        return bytes(data), STORE
    enc = encode_stream(data, codec)
    if len(enc) >= len(data):
        return bytes(data), STORE
    return enc, codec


def score(cr: float, t: float, lam: float = DEFAULT_LAMBDA) -> float:
    """Selection score; ``t`` is seconds per MB of test data."""
    return cr / (1.0 + lam * t)


@dataclass
class FieldPlan:
    assignments: dict[str, CodecId]

    def __getitem__(self, name: str) -> CodecId:
        return self.assignments[name]

    def get(self, name: str, default: CodecId = STORE) -> CodecId:
        return self.assignments.get(name, default)


def select_plan(streams: Mapping[str, bytes], registry: Iterable[CodecId] = REGISTRY,
                lam: float = DEFAULT_LAMBDA, sample_bytes: int | None = DEFAULT_SAMPLE_BYTES,
                timer: Callable[[CodecId, bytes], float] | None = None) -> FieldPlan:
    """Trial every codec on every field of the test chunk and keep the best score.

    The compression ratio of a trial counts the STORE fallback, so a codec
    that expands a field scores exactly like STORE and loses the tie. The
    time term comes from ``NOMINAL_SECONDS_PER_MB`` unless ``timer`` supplies
    measured seconds per MB.
    """
    registry = tuple(registry)
    plan = {}
    for name, data in streams.items():
        sample = data[:sample_bytes] if sample_bytes else data
        best, best_score = STORE, -1.0
        for codec in registry:
            if not sample:
                s = 1.0 if codec == STORE else 0.0
            else:
                enc, used = maybe_encode(sample, codec)
                cr = len(sample) / max(1, len(enc))
                if used == STORE and codec != STORE:
                    s = -1.0
                else:
                    t = timer(codec, sample) if timer else NOMINAL_SECONDS_PER_MB.get(codec, 0.0)
                    s = score(cr, t, lam)
            if s > best_score:
                best, best_score = codec, s
        plan[name] = best
    return FieldPlan(plan)


def measured_seconds_per_mb(codec: CodecId, sample: bytes) -> float:
    t0 = time.perf_counter()
    encode_stream(sample, codec)
    return (time.perf_counter() - t0) / max(len(sample) / 1e6, 1e-6)
