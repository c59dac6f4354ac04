"""Read-to-reference mapping and the bitmap/non_ref read encoding.

A read is mapped by voting: every valid seed inside the read, looked up in
the index, implies a reference start ``p - offset``. Once two seeds agree on
a start, the start is verified first with a Hamming comparison and, when that
fails, with an edit-distance alignment that tolerates insertions and
deletions.

Encoding of a matched read (oriented to the forward strand):

* ``bitmap`` holds one byte per read base, ``1`` when the base is copied from
  the reference and ``0`` when it is described by ``non_ref``.
* ``non_ref`` is consumed left to right, one entry per ``0`` bit that is not
  part of an insertion:

  - a base byte (``ACGTN``): substitution, consumes one reference base;
  - ``D`` varint(L+1) base: the base is emitted (consuming one reference
    base), then ``L`` reference bases are skipped;
  - ``I`` varint(L+1) base ins[L]: the base is emitted (consuming one
    reference base), then the ``L`` inserted bases follow; their bitmap bits
    are ``0`` and they have no entries of their own.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bitpack import decode_varint, encode_varint
from .errors import CorruptionError
from .ref_index import SeedIndex

_RC_TABLE = bytes.maketrans(b"ACGTN", b"TGCAN")
_DIGITS = bytes.maketrans(b"ACGT", b"0123")
_ONES_CACHE: dict[int, bytes] = {}

SUBST_BASES = frozenset(b"ACGTN")
INS, DEL = ord("I"), ord("D")


def _ones(n: int) -> bytes:
    ones = _ONES_CACHE.get(n)
    if ones is None:
        ones = _ONES_CACHE[n] = b"\x01" * n
    return ones


@dataclass(frozen=True)
class AlignParams:
    max_hamming_frac: float = 1 / 8
    # 0 disables the indel-aware fallback (Hamming-only matching).
    max_edit_frac: float = 1 / 4
    window_slack: int | None = None  # None: read_len // 4
    max_candidates: int = 4

    def __post_init__(self):
        if not 0 < self.max_hamming_frac < 1:
            raise ValueError("max_hamming_frac must be in (0, 1)")
        if self.max_edit_frac != 0 and not self.max_hamming_frac <= self.max_edit_frac < 1:
            raise ValueError("max_edit_frac must be 0 or in [max_hamming_frac, 1)")
        if self.max_candidates < 1:
            raise ValueError("max_candidates must be >= 1")
        if self.window_slack is not None and self.window_slack < 0:
            raise ValueError("window_slack must be >= 0")

    def slack_for(self, read_len: int) -> int:
        return read_len // 4 if self.window_slack is None else self.window_slack


@dataclass(slots=True)
class MapResult:
    matched: bool
    ref_start: int = 0
    strand: bool = False
    bitmap: bytes = b""
    non_ref: bytes = b""
    raw_seq: bytes | None = None
    qual: bytes = b""
    name: bytes | None = None

    @property
    def read_len(self) -> int:
        return len(self.bitmap) if self.matched else len(self.raw_seq)


def reverse_complement(seq: bytes) -> bytes:
    return seq.translate(_RC_TABLE)[::-1]


def hamming_distance(a: bytes, b: bytes) -> int:
    assert len(a) == len(b), "hamming_distance needs equal lengths"
    if a == b:
        return 0
    return int(np.count_nonzero(np.frombuffer(a, np.uint8) != np.frombuffer(b, np.uint8)))


# --- edit distance ---------------------------------------------------------

def _lcp(a: bytes, i: int, b: bytes, j: int) -> int:
    """Length of the common prefix of ``a[i:]`` and ``b[j:]``."""
    lim = min(len(a) - i, len(b) - j)
    n = 0
    while n + 16 <= lim and a[i + n:i + n + 16] == b[j + n:j + n + 16]:
        n += 16
    while n < lim and a[i + n] == b[j + n]:
        n += 1
    return n


def wfa_align(read: bytes, window: bytes, max_distance: int | None = None):
    """Unit-cost wavefront alignment of all of ``read`` against a prefix of ``window``.

    Returns ``(distance, cigar)`` or ``None`` once the distance would exceed
    ``max_distance``. Diagonal ``k`` is ``window_offset - read_offset``; each
    wavefront stores the furthest window offset reached per diagonal.
    """
    n, m = len(read), len(window)
    fronts = [[_lcp(read, 0, window, 0)]]
    origins = [[(None, 0)]]
    s = 0
    while True:
        front = fronts[s]
        end_k = None
        for k in sorted(range(-s, s + 1), key=lambda d: (abs(d), -d)):
            j = front[k + s]
            if j >= 0 and j - k == n:
                end_k = k
                break
        if end_k is not None:
            break
        s += 1
        if max_distance is not None and s > max_distance:
            return None
        ps = s - 1
        prev = front
        cur = [-1] * (2 * s + 1)
        org: list = [None] * (2 * s + 1)
        for k in range(-s, s + 1):
            best, op = -1, None
            if -ps <= k <= ps:
                pj = prev[k + ps]
                if 0 <= pj < m and pj - k < n:
                    best, op = pj + 1, "X"
            kk = k - 1
            if -ps <= kk <= ps:
                pj = prev[kk + ps]
                if 0 <= pj < m and pj - kk < n and pj + 1 > best:
                    best, op = pj + 1, "D"
            kk = k + 1
            if -ps <= kk <= ps:
                pj = prev[kk + ps]
                if pj >= 0 and pj - kk < n and pj > best:
                    best, op = pj, "I"
            if best >= 0:
                cur[k + s] = best + _lcp(read, best - k, window, best)
                org[k + s] = (op, best)
        fronts.append(cur)
        origins.append(org)

    ops = []
    k, j = end_k, fronts[s][end_k + s]
    for t in range(s, -1, -1):
        op, pre = origins[t][k + t]
        if j > pre:
            ops.append(["M", j - pre])
        if t == 0:
            break
        if op == "X":
            ops.append(["M", 1])
            j = pre - 1
        elif op == "D":
            ops.append(["D", 1])
            j, k = pre - 1, k - 1
        else:
            ops.append(["I", 1])
            j, k = pre, k + 1
    cigar: list[tuple[str, int]] = []
    for op, cnt in reversed(ops):
        if cigar and cigar[-1][0] == op:
            cigar[-1] = (op, cigar[-1][1] + cnt)
        else:
            cigar.append((op, cnt))
    return s, cigar


def local_align(read: bytes, ref_window: bytes) -> tuple[int, list[tuple[str, int]]]:
    """Edit distance and CIGAR of ``read`` against the best prefix of ``ref_window``."""
    return wfa_align(read, ref_window)


# --- bitmap / non_ref encoding --------------------------------------------

def _substitution_encoding(r: bytes, refseg: bytes) -> tuple[bytes, bytes]:
    if r == refseg:
        return _ones(len(r)), b""
    mism = np.flatnonzero(np.frombuffer(r, np.uint8) != np.frombuffer(refseg, np.uint8))
    bits = bytearray(_ones(len(r)))
    for i in mism.tolist():
        bits[i] = 0
    return bytes(bits), bytes(r[i] for i in mism.tolist())


def _normalize_cigar(cigar, start: int):
    """Drop a leading deletion and turn a leading insertion into an aligned
    block (moving the start left) so every indel has a preceding read base."""
    ops = [tuple(c) for c in cigar if c[1] > 0]
    while ops and ops[-1][0] == "D":
        ops.pop()
    if ops and ops[0][0] == "D":
        start += ops[0][1]
        ops = ops[1:]
    if ops and ops[0][0] == "I":
        n = ops[0][1]
        if start < n:
            return None
        start -= n
        if len(ops) > 1 and ops[1][0] == "M":
            ops = [("M", n + ops[1][1])] + ops[2:]
        else:
            ops[0] = ("M", n)
    for idx, (op, _) in enumerate(ops):
        if op != "M" and (idx == 0 or ops[idx - 1][0] != "M"):
            return None
    return ops, start


def cigar_encoding(r: bytes, ref: bytes, start: int, cigar):
    """Walk a CIGAR into ``(start, bitmap, non_ref)``; ``None`` if it cannot be encoded."""
    norm = _normalize_cigar(cigar, start)
    if norm is None:
        return None
    ops, start = norm
    L = len(r)
    bits = bytearray(L)
    nonref = bytearray()
    i, j = 0, start
    for idx, (op, cnt) in enumerate(ops):
        if op == "M":
            nxt = ops[idx + 1] if idx + 1 < len(ops) else None
            tail = nxt is not None and nxt[0] in "ID"
            run = cnt - 1 if tail else cnt
            if j + cnt > len(ref):
                return None
            seg_r, seg_f = r[i:i + run], ref[j:j + run]
            if seg_r == seg_f:
                bits[i:i + run] = _ones(run)
            else:
                for t in range(run):
                    if seg_r[t] == seg_f[t]:
                        bits[i + t] = 1
                    else:
                        nonref.append(seg_r[t])
            i += run
            j += run
            if tail:
                kind, n = nxt
                nonref += kind.encode() + encode_varint(n + 1) + r[i:i + 1]
                if kind == "I":
                    nonref += r[i + 1:i + 1 + n]
                i += 1
                j += 1
        elif op == "D":
            j += cnt
        else:
            i += cnt
    if i != L:
        return None
    return start, bytes(bits), bytes(nonref)


def reconstruct_oriented(ref: bytes, ref_start: int, bitmap: bytes, non_ref: bytes,
                         read_len: int) -> bytes:
    if len(bitmap) != read_len:
        raise CorruptionError("bitmap length differs from read length")
    if not non_ref and ref_start + read_len <= len(ref) and bitmap == _ones(read_len):
        return ref[ref_start:ref_start + read_len]
    out = bytearray()
    i, j, p = 0, ref_start, 0
    nr = len(non_ref)
    while i < read_len:
        z = bitmap.find(b"\x00", i)
        if z < 0:
            z = read_len
        if z > i:
            if j + (z - i) > len(ref):
                raise CorruptionError("read runs past the end of the reference")
            out += ref[j:j + z - i]
            j += z - i
            i = z
            if i >= read_len:
                break
        if p >= nr:
            raise CorruptionError("non_ref exhausted before bitmap")
        b = non_ref[p]
        p += 1
        if b in SUBST_BASES:
            out.append(b)
            i += 1
            j += 1
        elif b == INS or b == DEL:
            v, p = decode_varint(non_ref, p)
            n = v - 1
            if n < 1 or p >= nr:
                raise CorruptionError("malformed indel record in non_ref")
            out.append(non_ref[p])
            p += 1
            i += 1
            j += 1
            if b == DEL:
                j += n
            else:
                if p + n > nr or i + n > read_len or bitmap[i:i + n].count(1):
                    raise CorruptionError("malformed insertion record in non_ref")
                out += non_ref[p:p + n]
                p += n
                i += n
        else:
            raise CorruptionError(f"unexpected byte {b:#x} in non_ref")
    if p != nr:
        raise CorruptionError("trailing bytes in non_ref")
    return bytes(out)


def reconstruct_read(ref: bytes, ref_start: int, strand: bool, bitmap: bytes,
                     non_ref: bytes, read_len: int) -> bytes:
    seq = reconstruct_oriented(ref, ref_start, bitmap, non_ref, read_len)
    return reverse_complement(seq) if strand else seq


# --- mapping ----------------------------------------------------------------

def _scan_order(L: int, k: int) -> list[int]:
    """Seed offsets alternating from the front and the back of the read."""
    lo, hi = 0, L - k
    order = []
    while lo <= hi:
        order.append(lo)
        if hi != lo:
            order.append(hi)
        lo += 1
        hi -= 1
    return order


class Aligner:
    """Maps reads against one reference/index pair. Stateless across reads."""

    def __init__(self, ref: bytes, index: SeedIndex | None, params: AlignParams | None = None):
        self.ref = ref
        self.index = index
        self.params = params or AlignParams()
        self._orders: dict[int, list[int]] = {}
        if index is not None:
            self.k = index.k
            self._high = 4 ** (self.k - 2)
            self._ri = memoryview(np.ascontiguousarray(index.range_index))
            self._fi = memoryview(np.ascontiguousarray(index.forward_index))

    def _order(self, L: int) -> list[int]:
        order = self._orders.get(L)
        if order is None:
            order = self._orders[L] = _scan_order(L, self.k)
        return order

    def _seed_hits(self, r: bytes):
        """Yield ``(offset, positions)`` for each valid seed in scan order."""
        k, high, ri, fi = self.k, self._high, self._ri, self._fi
        digits = r.translate(_DIGITS)
        check_n = 78 in r  # 'N'
        for o in self._order(len(r)):
            if r[o] != 71:
                continue
            second = r[o + 1]
            if second == 71:
                continue
            if second == 65:
                c2 = 0
            elif second == 67:
                c2 = 1
            elif second == 84:
                c2 = 2
            else:
                continue
            tail = digits[o + 2:o + k]
            if check_n and 78 in tail:
                continue
            ordinal = c2 * high + int(tail, 4)
            a, b = ri[ordinal], ri[ordinal + 1]
            if a != b:
                yield o, fi[a:b].tolist()

    def _in_range(self, start: int, L: int) -> bool:
        return start >= 0 and start + L <= len(self.ref)

    def candidates(self, read: bytes) -> list[tuple[int, bool]]:
        """Full seed vote for both orientations (no early stop)."""
        L = len(read)
        if L <= self.k:
            return []
        found = []
        for strand in (False, True):
            r = reverse_complement(read) if strand else read
            votes: dict[int, int] = {}
            for o, positions in self._seed_hits(r):
                for p in positions:
                    votes[p - o] = votes.get(p - o, 0) + 1
            ranked = sorted((s for s, c in votes.items() if c >= 2 and self._in_range(s, L)),
                            key=lambda s: (-votes[s], s))
            found.extend((s, strand) for s in ranked[:self.params.max_candidates])
        return found

    def encode(self, read: bytes, start: int, strand: bool, oriented: bytes | None = None):
        """Verify one candidate; return ``(start, bitmap, non_ref)`` or ``None``."""
        r = oriented if oriented is not None else (
            reverse_complement(read) if strand else read)
        L = len(r)
        ref = self.ref
        if not self._in_range(start, L):
            return None
        refseg = ref[start:start + L]
        if r == refseg:
            return start, _ones(L), b""
        p = self.params
        if hamming_distance(r, refseg) <= int(L * p.max_hamming_frac):
            bits, nonref = _substitution_encoding(r, refseg)
            return start, bits, nonref
        if p.max_edit_frac == 0:
            return None
        window = ref[start:start + L + p.slack_for(L)]
        aligned = wfa_align(r, window, int(L * p.max_edit_frac))
        if aligned is None:
            return None
        return cigar_encoding(r, ref, start, aligned[1])

    def align(self, read: bytes, qual: bytes = b"", name: bytes | None = None) -> MapResult:
        """Try candidates as they reach a two-seed consensus, forward strand first."""
        L = len(read)
        if L > self.k:
            limit = self.params.max_candidates
            for strand in (False, True):
                r = reverse_complement(read) if strand else read
                votes: dict[int, int] = {}
                tried = 0
                for o, positions in self._seed_hits(r):
                    for pos in positions:
                        s = pos - o
                        c = votes.get(s, 0) + 1
                        votes[s] = c
                        if c != 2 or not self._in_range(s, L):
                            continue
                        enc = self.encode(read, s, strand, r)
                        if enc is not None:
                            start, bits, nonref = enc
                            return MapResult(True, start, strand, bits, nonref, None, qual, name)
                        tried += 1
                        if tried >= limit:
                            break
                    if tried >= limit:
                        break
        return MapResult(False, raw_seq=read, qual=qual, name=name)


def find_candidates(read: bytes, index: SeedIndex, params: AlignParams | None = None,
                    ref: bytes | None = None) -> list[tuple[int, bool]]:
    """Candidates ``(ref_start, strand)``: forward first, each orientation ranked
    by vote count then smaller start. Range filtering needs ``ref``."""
    aligner = Aligner(ref if ref is not None else b"", index, params)
    if ref is None:
        aligner._in_range = lambda s, L: s >= 0  # type: ignore[method-assign]
    return aligner.candidates(read)


def encode_map_result(read: bytes, candidate: tuple[int, bool], ref: bytes,
                      params: AlignParams | None = None, qual: bytes = b"",
                      name: bytes | None = None) -> MapResult:
    start, strand = candidate
    enc = Aligner(ref, None, params).encode(read, start, strand)
    if enc is None:
        return MapResult(False, raw_seq=read, qual=qual, name=name)
    start, bits, nonref = enc
    return MapResult(True, start, strand, bits, nonref, None, qual, name)


def align_read(read: bytes, index: SeedIndex, ref: bytes, params: AlignParams | None = None) -> MapResult:
    return Aligner(ref, index, params).align(read)
