"""Quality-score coding: dominant bitmaps, canonical Huffman, bin quantization."""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from . import _jit
from .bitpack import decode_varint, decode_varint_array, encode_varint, encode_varint_array
from .errors import CorruptionError
from .seq_segment import FieldStream

QUAL_MIN, QUAL_MAX = 0x21, 0x7E
N_QUAL_SYMBOLS = QUAL_MAX - QUAL_MIN + 1

DOMINANT_FIELDS = ("qual.dom_bitmap", "qual.dom_lengths", "qual.dom_scores", "qual.remainder")
HUFFMAN_FIELDS = ("qual.huffman",)
BINS_FIELD = "qual.bins"
QUALITY_MODES = ("huffman", "dominant")

DEFAULT_MAX_ROUNDS = 4
MIN_ROUND_RESIDUAL = 2
MAX_CODE_LEN = 16


@dataclass
class QualitySegment:
    mode: str
    fields: dict[str, FieldStream] = field(default_factory=dict)


# --- dominant bitmap ---------------------------------------------------------

def dominant_encode(qual_stream: bytes, max_rounds: int = DEFAULT_MAX_ROUNDS) -> QualitySegment:
    """Peel off the majority score round by round.

    A round runs only while the most frequent remaining score covers at least
    half of the residual, so each round at least halves the residual. A lone
    leftover byte is kept in the remainder rather than spent on a round.
    """
    residual = np.frombuffer(qual_stream, dtype=np.uint8)
    bit_chunks, lengths, scores = [], [], []
    while len(lengths) < max_rounds and residual.size >= MIN_ROUND_RESIDUAL:
        counts = np.bincount(residual, minlength=256)
        d = int(counts.argmax())
        if 2 * int(counts[d]) < residual.size:
            break
        hit = residual == d
        bit_chunks.append(hit.astype(np.uint8))
        lengths.append(residual.size)
        scores.append(d)
        residual = residual[~hit]
    bits = np.concatenate(bit_chunks) if bit_chunks else np.zeros(0, np.uint8)
    return QualitySegment("dominant", {
        "qual.dom_bitmap": FieldStream(bits.size, np.packbits(bits).tobytes()),
        "qual.dom_lengths": FieldStream(len(lengths), encode_varint_array(lengths)),
        "qual.dom_scores": FieldStream(len(scores), bytes(scores)),
        "qual.remainder": FieldStream(residual.size, residual.tobytes()),
    })


def dominant_decode(segment: QualitySegment) -> bytes:
    f = segment.fields
    lengths = decode_varint_array(f["qual.dom_lengths"].data, f["qual.dom_lengths"].count).tolist()
    scores = f["qual.dom_scores"].data
    if len(scores) != len(lengths) or f["qual.dom_scores"].count != len(lengths):
        raise CorruptionError("dominant score and length arrays differ in size")
    nbits = f["qual.dom_bitmap"].count
    if nbits < sum(lengths):
        raise CorruptionError("dominant bitmap shorter than the sum of round lengths")
    if nbits != sum(lengths) or len(f["qual.dom_bitmap"].data) != (nbits + 7) // 8:
        raise CorruptionError("dominant bitmap size inconsistent with round lengths")
    bits = np.unpackbits(np.frombuffer(f["qual.dom_bitmap"].data, np.uint8), count=nbits).astype(bool)
    residual = np.frombuffer(f["qual.remainder"].data, dtype=np.uint8)
    offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
    for r in range(len(lengths) - 1, -1, -1):
        mask = bits[offsets[r]:offsets[r + 1]]
        if int((~mask).sum()) != residual.size:
            raise CorruptionError(f"dominant round {r} does not match its residual")
        out = np.empty(lengths[r], dtype=np.uint8)
        out[mask] = scores[r]
        out[~mask] = residual
        residual = out
    return residual.tobytes()


# --- canonical Huffman -----------------------------------------------------------

def huffman_code_lengths(freqs: dict[int, int]) -> dict[int, int]:
    """Textbook Huffman code lengths; a lone symbol gets a 1-bit code."""
    if not freqs:
        return {}
    if len(freqs) == 1:
        return {next(iter(freqs)): 1}
    heap = [(f, sym, (sym,)) for sym, f in sorted(freqs.items())]
    heapq.heapify(heap)
    depth = dict.fromkeys(freqs, 0)
    while len(heap) > 1:
        f1, t1, s1 = heapq.heappop(heap)
        f2, t2, s2 = heapq.heappop(heap)
        for s in s1 + s2:
            depth[s] += 1
        heapq.heappush(heap, (f1 + f2, min(t1, t2), s1 + s2))
    return depth


def limited_code_lengths(freqs: dict[int, int], max_len: int = MAX_CODE_LEN) -> dict[int, int]:
    """Huffman lengths, flattening the frequencies until no code exceeds ``max_len``."""
    lengths = huffman_code_lengths(freqs)
    shift = 0
    while lengths and max(lengths.values()) > max_len:
        shift += 1
        lengths = huffman_code_lengths({s: max(1, f >> shift) for s, f in freqs.items()})
    return lengths


def canonical_codes(lengths: dict[int, int]) -> dict[int, tuple[int, int]]:
    """symbol -> (code, length), codes assigned in (length, symbol) order."""
    codes = {}
    code = 0
    prev_len = 0
    for sym, ln in sorted(lengths.items(), key=lambda kv: (kv[1], kv[0])):
        code <<= ln - prev_len
        codes[sym] = (code, ln)
        code += 1
        prev_len = ln
    return codes


def _check_kraft(lengths: dict[int, int]) -> None:
    if not lengths:
        return
    if any(not 1 <= ln <= MAX_CODE_LEN for ln in lengths.values()):
        raise CorruptionError("Huffman code length out of range")
    if len(lengths) == 1:
        if next(iter(lengths.values())) != 1:
            raise CorruptionError("single-symbol Huffman table must use a 1-bit code")
        return
    kraft = sum(1 << (MAX_CODE_LEN - ln) for ln in lengths.values())
    if kraft != 1 << MAX_CODE_LEN:
        raise CorruptionError("Huffman code lengths violate the Kraft equality")


def _encode_bits(data: np.ndarray, codes: dict[int, tuple[int, int]]) -> tuple[bytes, int]:
    code_of = np.zeros(256, dtype=np.uint32)
    len_of = np.zeros(256, dtype=np.int64)
    for sym, (c, ln) in codes.items():
        code_of[sym] = c
        len_of[sym] = ln
    pieces = []
    total = 0
    block = 1 << 20
    for lo in range(0, data.size, block):
        d = data[lo:lo + block]
        lens = len_of[d]
        n = int(lens.sum())
        starts = np.cumsum(lens) - lens
        within = np.arange(n, dtype=np.int64) - np.repeat(starts, lens)
        shift = (np.repeat(lens, lens) - 1 - within).astype(np.uint32)
        pieces.append(((np.repeat(code_of[d], lens) >> shift) & 1).astype(np.uint8))
        total += n
    bits = np.concatenate(pieces) if pieces else np.zeros(0, np.uint8)
    return np.packbits(bits).tobytes(), total


def huffman_encode(qual_stream: bytes) -> QualitySegment:
    """Layout: symbol count u8, (symbol, length) pairs, varint symbol total, packed bits."""
    data = np.frombuffer(qual_stream, dtype=np.uint8)
    counts = np.bincount(data, minlength=256)
    freqs = {int(s): int(counts[s]) for s in np.flatnonzero(counts)}
    if len(freqs) > N_QUAL_SYMBOLS:
        raise ValueError("quality alphabet larger than 94 symbols")
    lengths = limited_code_lengths(freqs)
    codes = canonical_codes(lengths)
    table = bytearray([len(lengths)])
    for sym in sorted(lengths):
        table += bytes([sym, lengths[sym]])
    payload, _ = _encode_bits(data, codes)
    blob = bytes(table) + encode_varint(data.size) + payload
    return QualitySegment("huffman", {"qual.huffman": FieldStream(data.size, blob)})


def huffman_table_size(segment: QualitySegment) -> int:
    return 1 + 2 * segment.fields["qual.huffman"].data[0]


def huffman_decode(segment: QualitySegment) -> bytes:
    blob = segment.fields["qual.huffman"].data
    if not blob:
        raise CorruptionError("empty Huffman field")
    n_sym = blob[0]
    if len(blob) < 1 + 2 * n_sym:
        raise CorruptionError("truncated Huffman table")
    lengths = {}
    for i in range(n_sym):
        sym, ln = blob[1 + 2 * i], blob[2 + 2 * i]
        if sym in lengths:
            raise CorruptionError("duplicate symbol in Huffman table")
        lengths[sym] = ln
    _check_kraft(lengths)
    total, p = decode_varint(blob, 1 + 2 * n_sym)
    if total != segment.fields["qual.huffman"].count:
        raise CorruptionError("Huffman symbol count differs from field count")
    if total == 0:
        return b""
    if not lengths:
        raise CorruptionError("Huffman table is empty but symbols are expected")
    peek = max(lengths.values())
    lut_sym = np.zeros(1 << peek, dtype=np.uint8)
    lut_len = np.zeros(1 << peek, dtype=np.int64)
    for sym, (code, ln) in canonical_codes(lengths).items():
        lo = code << (peek - ln)
        lut_sym[lo:lo + (1 << (peek - ln))] = sym
        lut_len[lo:lo + (1 << (peek - ln))] = ln
    bits = np.unpackbits(np.frombuffer(blob, dtype=np.uint8, offset=p))
    out, used = _jit.huffman_decode(bits, total, peek, lut_sym, lut_len)
    if used < 0 or (bits.size - used) >= 8:
        raise CorruptionError("Huffman payload does not match the symbol count")
    return out.tobytes()


# --- bin quantization ----------------------------------------------------------

@dataclass(frozen=True)
class QuantizerSpec:
    retained: bytes  # ascending
    table: bytes     # 256-entry translate table; only 0x21..0x7E is meaningful

    @property
    def n_bins(self) -> int:
        return len(self.retained)

    @property
    def mapping(self) -> bytes:
        """The 94-entry score -> retained score table."""
        return self.table[QUAL_MIN:QUAL_MAX + 1]

    def to_bytes(self) -> bytes:
        return bytes([self.n_bins]) + self.retained

    @classmethod
    def from_bytes(cls, data: bytes) -> "QuantizerSpec":
        if not data or len(data) != 1 + data[0]:
            raise CorruptionError("malformed quantizer field")
        retained = data[1:]
        if list(retained) != sorted(set(retained)) or any(
                not QUAL_MIN <= b <= QUAL_MAX for b in retained):
            raise CorruptionError("quantizer retained scores are not ascending printable bytes")
        return _spec_from_retained(retained)


def _spec_from_retained(retained: bytes) -> QuantizerSpec:
    kept = np.frombuffer(retained, dtype=np.uint8).astype(np.int64)
    scores = np.arange(256)
    dist = np.abs(scores[:, None] - kept[None, :])
    # argmin picks the first minimum, i.e. the smaller retained score on ties.
    table = kept[dist.argmin(axis=1)].astype(np.uint8).tobytes()
    return QuantizerSpec(bytes(retained), table)


def quality_histogram(qual_stream: bytes) -> np.ndarray:
    return np.bincount(np.frombuffer(qual_stream, dtype=np.uint8), minlength=256)


def build_quantizer(histogram, n_bins: int) -> QuantizerSpec:
    """Keep the ``n_bins`` most frequent scores; map the rest to the nearest kept one."""
    if not 1 <= n_bins <= N_QUAL_SYMBOLS:
        raise ValueError("n_bins must be in [1, 94]")
    if isinstance(histogram, dict):
        hist = np.zeros(256, dtype=np.int64)
        for sym, c in histogram.items():
            hist[sym if isinstance(sym, int) else ord(sym)] = c
    else:
        hist = np.asarray(histogram, dtype=np.int64)
    observed = [int(s) for s in np.flatnonzero(hist)]
    if not observed:
        raise ValueError("empty quality histogram")
    ranked = sorted(observed, key=lambda s: (-int(hist[s]), s))
    return _spec_from_retained(bytes(sorted(ranked[:n_bins])))


def apply_quantizer(spec: QuantizerSpec, qual_stream: bytes) -> bytes:
    return qual_stream.translate(spec.table)


# --- segment-level entry points ---------------------------------------------------

def encode_qualities(qual_stream: bytes, mode: str = "huffman", n_bins: int = 0,
                     max_rounds: int = DEFAULT_MAX_ROUNDS) -> QualitySegment:
    """Optionally quantize, then code with the selected lossless mode."""
    spec = None
    if n_bins and qual_stream:
        spec = build_quantizer(quality_histogram(qual_stream), n_bins)
        qual_stream = apply_quantizer(spec, qual_stream)
    if mode == "huffman":
        seg = huffman_encode(qual_stream)
    elif mode == "dominant":
        seg = dominant_encode(qual_stream, max_rounds)
    else:
        raise ValueError(f"unknown quality mode {mode!r}")
    if spec is not None:
        seg.fields[BINS_FIELD] = FieldStream(spec.n_bins, spec.to_bytes())
    return seg


def decode_qualities(segment: QualitySegment) -> bytes:
    if segment.mode == "huffman":
        return huffman_decode(segment)
    if segment.mode == "dominant":
        return dominant_decode(segment)
    raise CorruptionError(f"unknown quality mode {segment.mode!r}")
