"""Aggregate a chunk's MapResults into eleven homogeneous field streams."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .aligner import MapResult, reconstruct_read
from .bitpack import (decode_varint, decode_varint_array, encode_varint,
                      encode_varint_array, pack_bits, unpack_bits)
from .errors import CorruptionError

SEQ_FIELDS = (
    "seq.matched",      # bit per read
    "seq.pos_mode",     # bit per matched read, 1 = delta
    "seq.pos_delta",    # varints
    "seq.pos_abs",      # u64 little-endian
    "seq.strand",       # bit per matched read
    "seq.read_len",     # varint per read
    "seq.bitmap",       # concatenated bitmaps of matched reads
    "seq.nonref",       # concatenated non_ref bytes
    "seq.nonref_len",   # varint per matched read
    "seq.unmatched",    # N escapes + 2-bit packed bases of unmatched reads
    "seq.pair_swap",    # bit per pair (paired mode only)
)

DELTA_LIMIT = 1 << 16

_CODE = np.zeros(256, dtype=np.uint8)
for _i, _b in enumerate(b"ACGT"):
    _CODE[_b] = _i
_BASES = np.frombuffer(b"ACGT", dtype=np.uint8)


@dataclass
class FieldStream:
    count: int
    data: bytes


@dataclass
class SequenceSegment:
    fields: dict[str, FieldStream] = field(default_factory=dict)

    def __getitem__(self, name: str) -> FieldStream:
        return self.fields[name]


def swap_pair(r1: MapResult, r2: MapResult) -> tuple[MapResult, MapResult, bool]:
    """Put the forward-strand mate first when the pair is (reverse, forward)."""
    if r1.matched and r2.matched and r1.strand and not r2.strand:
        return r2, r1, True
    return r1, r2, False


def delta_encode_positions(positions: Sequence[int]) -> tuple[list[int], list[int], list[int]]:
    modes, deltas, absolutes = [], [], []
    prev = None
    for p in positions:
        if prev is not None and 0 <= p - prev < DELTA_LIMIT:
            modes.append(1)
            deltas.append(p - prev)
        else:
            modes.append(0)
            absolutes.append(p)
        prev = p
    return modes, deltas, absolutes


def delta_decode_positions(modes: Sequence[int], deltas: Sequence[int],
                           absolutes: Sequence[int]) -> list[int]:
    out = []
    di = ai = 0
    prev = None
    for m in modes:
        if m:
            if prev is None or di >= len(deltas):
                raise CorruptionError("delta position without a predecessor")
            prev = prev + int(deltas[di])
            di += 1
        else:
            if ai >= len(absolutes):
                raise CorruptionError("absolute position stream exhausted")
            prev = int(absolutes[ai])
            ai += 1
        out.append(prev)
    if di != len(deltas) or ai != len(absolutes):
        raise CorruptionError("position streams have unused entries")
    return out


def pack_unmatched(seqs: Sequence[bytes]) -> bytes:
    """N escapes as varint pairs (read ordinal, offset), then 2-bit bases (N packed as A)."""
    esc = bytearray()
    n_esc = 0
    for ordinal, s in enumerate(seqs):
        off = s.find(b"N")
        while off >= 0:
            esc += encode_varint(ordinal) + encode_varint(off)
            n_esc += 1
            off = s.find(b"N", off + 1)
    codes = _CODE[np.frombuffer(b"".join(seqs), dtype=np.uint8)]
    pad = (-codes.size) % 4
    if pad:
        codes = np.concatenate([codes, np.zeros(pad, np.uint8)])
    quads = codes.reshape(-1, 4)
    packed = (quads[:, 0] << 6) | (quads[:, 1] << 4) | (quads[:, 2] << 2) | quads[:, 3]
    return encode_varint(n_esc) + bytes(esc) + packed.astype(np.uint8).tobytes()


def unpack_unmatched(data: bytes, lengths: Sequence[int]) -> list[bytes]:
    n_esc, p = decode_varint(data, 0)
    escapes = []
    for _ in range(n_esc):
        ordinal, p = decode_varint(data, p)
        off, p = decode_varint(data, p)
        escapes.append((ordinal, off))
    total = int(sum(lengths))
    packed = np.frombuffer(data, dtype=np.uint8, offset=p)
    if packed.size != (total + 3) // 4:
        raise CorruptionError("unmatched base stream has the wrong size")
    codes = np.stack([(packed >> 6) & 3, (packed >> 4) & 3, (packed >> 2) & 3, packed & 3],
                     axis=1).reshape(-1)[:total]
    flat = _BASES[codes].tobytes()
    seqs = []
    pos = 0
    for L in lengths:
        seqs.append(flat[pos:pos + L])
        pos += L
    for ordinal, off in escapes:
        if ordinal >= len(seqs) or off >= len(seqs[ordinal]):
            raise CorruptionError("N escape outside unmatched reads")
        s = seqs[ordinal]
        seqs[ordinal] = s[:off] + b"N" + s[off + 1:]
    return seqs


def build_sequence_segment(results: Sequence[MapResult], paired: bool = False,
                           swap_flags: Sequence[int] | None = None) -> SequenceSegment:
    """``results`` are in chunk order; in paired mode mates are adjacent and
    already swapped, with ``swap_flags`` holding one flag per pair."""
    n = len(results)
    matched = [r for r in results if r.matched]
    unmatched = [r.raw_seq for r in results if not r.matched]
    modes, deltas, absolutes = delta_encode_positions([r.ref_start for r in matched])
    bitmap = b"".join(r.bitmap for r in matched)
    if paired:
        swap_flags = list(swap_flags) if swap_flags is not None else [0] * (n // 2)
        if len(swap_flags) * 2 != n:
            raise ValueError("paired segment needs one swap flag per pair")
    else:
        swap_flags = []
    f = {
        "seq.matched": FieldStream(n, pack_bits([1 if r.matched else 0 for r in results])),
        "seq.pos_mode": FieldStream(len(modes), pack_bits(modes)),
        "seq.pos_delta": FieldStream(len(deltas), encode_varint_array(deltas)),
        "seq.pos_abs": FieldStream(len(absolutes), np.asarray(absolutes, dtype="<u8").tobytes()),
        "seq.strand": FieldStream(len(matched), pack_bits([1 if r.strand else 0 for r in matched])),
        "seq.read_len": FieldStream(n, encode_varint_array([r.read_len for r in results])),
        "seq.bitmap": FieldStream(len(bitmap), pack_bits(bitmap)),
        "seq.nonref": FieldStream(sum(len(r.non_ref) for r in matched),
                                  b"".join(r.non_ref for r in matched)),
        "seq.nonref_len": FieldStream(len(matched),
                                      encode_varint_array([len(r.non_ref) for r in matched])),
        "seq.unmatched": FieldStream(len(unmatched), pack_unmatched(unmatched) if unmatched else b""),
        "seq.pair_swap": FieldStream(len(swap_flags), pack_bits(swap_flags)),
    }
    return SequenceSegment(f)


def decode_sequence_segment(segment: SequenceSegment, ref: bytes) -> list[bytes]:
    """Restore read sequences in chunk order, with pair swaps undone."""
    f = segment.fields
    missing = [name for name in SEQ_FIELDS if name not in f]
    if missing:
        raise CorruptionError(f"sequence segment lacks fields {missing}")
    n = f["seq.matched"].count
    flags = unpack_bits(f["seq.matched"].data, n)
    lengths = decode_varint_array(f["seq.read_len"].data, f["seq.read_len"].count)
    if lengths.size != n:
        raise CorruptionError("seq.read_len count differs from read count")
    n_matched = int(flags.sum())
    for name in ("seq.pos_mode", "seq.strand", "seq.nonref_len"):
        if f[name].count != n_matched:
            raise CorruptionError(f"{name} count differs from matched read count")
    if f["seq.unmatched"].count != n - n_matched:
        raise CorruptionError("seq.unmatched count differs from unmatched read count")
    modes = unpack_bits(f["seq.pos_mode"].data, n_matched)
    deltas = decode_varint_array(f["seq.pos_delta"].data, f["seq.pos_delta"].count)
    abs_raw = f["seq.pos_abs"].data
    if len(abs_raw) != 8 * f["seq.pos_abs"].count:
        raise CorruptionError("seq.pos_abs size mismatch")
    absolutes = np.frombuffer(abs_raw, dtype="<u8")
    positions = delta_decode_positions(modes.tolist(), deltas.tolist(), absolutes.tolist())
    strands = unpack_bits(f["seq.strand"].data, n_matched).tolist()
    nonref_lens = decode_varint_array(f["seq.nonref_len"].data, n_matched).tolist()
    nonref = f["seq.nonref"].data
    if sum(nonref_lens) != len(nonref) or f["seq.nonref"].count != len(nonref):
        raise CorruptionError("seq.nonref_len does not add up to seq.nonref size")
    lengths = lengths.tolist()
    matched_lens = [L for L, fl in zip(lengths, flags.tolist()) if fl]
    nbits = f["seq.bitmap"].count
    if nbits != sum(matched_lens):
        raise CorruptionError("seq.bitmap bit count differs from matched read lengths")
    bitmap = unpack_bits(f["seq.bitmap"].data, nbits).tobytes()
    unmatched_lens = [L for L, fl in zip(lengths, flags.tolist()) if not fl]
    unmatched = unpack_unmatched(f["seq.unmatched"].data, unmatched_lens) if unmatched_lens else []

    out: list[bytes] = []
    mi = ui = bpos = npos = 0
    for fl, L in zip(flags.tolist(), lengths):
        if fl:
            nl = nonref_lens[mi]
            out.append(reconstruct_read(ref, positions[mi], bool(strands[mi]),
                                        bitmap[bpos:bpos + L], nonref[npos:npos + nl], L))
            bpos += L
            npos += nl
            mi += 1
        else:
            out.append(unmatched[ui])
            ui += 1
    swap = f["seq.pair_swap"]
    if swap.count:
        if swap.count * 2 != n:
            raise CorruptionError("seq.pair_swap count differs from pair count")
        for i, s in enumerate(unpack_bits(swap.data, swap.count).tolist()):
            if s:
                out[2 * i], out[2 * i + 1] = out[2 * i + 1], out[2 * i]
    return out
