"""Seed index over the concatenated ("forward") reference sequence.

A seed is a ``k``-base word that starts with ``G`` and whose second base is
not ``G``. Valid seeds map injectively onto ``[0, 3 * 4**(k-2))``. The index is
two arrays: ``range_index`` holds cumulative occurrence counts per seed
ordinal (with one trailing entry), ``forward_index`` holds the reference
positions grouped by ordinal and ascending within each group.
"""
from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from ._jit import fnv1a64
from .errors import CorruptionError, InputError, ReferenceMismatchError

DEFAULT_K = 15
MIN_K, MAX_K = 11, 20

INDEX_MAGIC = b"FQZIDX\x00\x01"
INDEX_VERSION = 1

CODE4 = {ord("A"): 0, ord("C"): 1, ord("G"): 2, ord("T"): 3}
CODE2 = {ord("A"): 0, ord("C"): 1, ord("T"): 2}

# byte -> 0..3 for ACGT, 4 for anything else
_CODE_TABLE = np.full(256, 4, dtype=np.uint8)
for _b, _c in CODE4.items():
    _CODE_TABLE[_b] = _c

_FORWARD_TABLE = bytes(
    b if b in b"ACGT" else (b - 32 if b in b"acgt" else ord("A")) for b in range(256))


def n_seed_ordinals(k: int) -> int:
    return 3 * 4 ** (k - 2)


def check_k(k: int) -> None:
    if not MIN_K <= k <= MAX_K:
        raise ValueError(f"seed length k={k} outside [{MIN_K}, {MAX_K}]")


@dataclass
class ForwardSequence:
    bases: bytes
    boundaries: list[tuple[str, int]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.bases)

    @property
    def checksum(self) -> int:
        if getattr(self, "_checksum", None) is None:
            self._checksum = fnv1a64(self.bases)
        return self._checksum


def read_fasta(path: str | os.PathLike) -> list[tuple[str, bytes]]:
    """Return ``[(name, sequence)]`` in file order; handles gzip input."""
    opener = gzip.open if _sniff_gzip(path) else open
    contigs: list[tuple[str, bytes]] = []
    name = None
    parts: list[bytes] = []
    try:
        with opener(path, "rb") as fh:
            for line in fh:
                line = line.rstrip(b"\r\n")
                if line.startswith(b">"):
                    if name is not None:
                        contigs.append((name, b"".join(parts)))
                    name = line[1:].split(None, 1)[0].decode() if line[1:].strip() else ""
                    parts = []
                elif line:
                    if name is None:
                        raise InputError(f"{path}: sequence data before first '>' header")
                    parts.append(line.strip())
    except OSError as exc:
        raise InputError(f"cannot read reference {path}: {exc}") from exc
    if name is not None:
        contigs.append((name, b"".join(parts)))
    return contigs


def _sniff_gzip(path) -> bool:
    try:
        with open(path, "rb") as fh:
            return fh.read(2) == b"\x1f\x8b"
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def forward_from_contigs(contigs: list[tuple[str, bytes]]) -> ForwardSequence:
    if not contigs:
        raise InputError("reference has no contigs")
    boundaries = []
    offset = 0
    for name, seq in contigs:
        boundaries.append((name, offset))
        offset += len(seq)
    bases = b"".join(seq for _, seq in contigs).translate(_FORWARD_TABLE)
    return ForwardSequence(bases, boundaries)


def build_forward_sequence(fasta: str | os.PathLike) -> ForwardSequence:
    """Concatenate contigs in file order, replacing non-ACGT symbols with 'A'."""
    return forward_from_contigs(read_fasta(fasta))


def is_valid_seed(seed: bytes) -> bool:
    return (len(seed) >= 2 and seed[0] == 0x47 and seed[1] in CODE2
            and all(b in CODE4 for b in seed[2:]))


def seed_ordinal(seed: bytes, k: int | None = None) -> int | None:
    """Map a valid seed to its ordinal; ``None`` for invalid seeds."""
    if k is not None and len(seed) != k:
        raise ValueError(f"seed length {len(seed)} != k={k}")
    if not is_valid_seed(seed):
        return None
    value = CODE2[seed[1]]
    for b in seed[2:]:
        value = value * 4 + CODE4[b]
    return value


@dataclass
class SeedIndex:
    k: int
    range_index: np.ndarray
    forward_index: np.ndarray
    checksum: int = 0
    ref_length: int = 0
    boundaries: list[tuple[str, int]] = field(default_factory=list)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SeedIndex):
            return NotImplemented
        return (self.k == other.k and self.checksum == other.checksum
                and self.ref_length == other.ref_length
                and self.boundaries == other.boundaries
                and np.array_equal(self.range_index, other.range_index)
                and np.array_equal(self.forward_index, other.forward_index))

    def lookup(self, ordinal: int) -> np.ndarray:
        return self.forward_index[self.range_index[ordinal]:self.range_index[ordinal + 1]]


def lookup(index: SeedIndex, ordinal: int) -> np.ndarray:
    return index.lookup(ordinal)


def seed_positions_and_ordinals(bases: bytes, k: int) -> tuple[np.ndarray, np.ndarray]:
    """All valid-seed start positions (ascending) and their ordinals."""
    codes = _CODE_TABLE[np.frombuffer(bases, dtype=np.uint8)]
    n_starts = len(bases) - k + 1
    if n_starts <= 0:
        return np.zeros(0, np.uint64), np.zeros(0, np.uint64)
    valid = (codes[:n_starts] == 2) & (codes[1:n_starts + 1] != 2)
    pos = np.flatnonzero(valid)
    # Forward sequences are pure ACGT, but guard against other callers.
    bad = np.zeros(pos.size, dtype=bool)
    acc = np.zeros(pos.size, dtype=np.uint64)
    for j in range(1, k):
        c = codes[pos + j]
        bad |= c > 3
        if j == 1:
            acc = np.where(c == 3, 2, c).astype(np.uint64)
        else:
            acc = acc * np.uint64(4) + c.astype(np.uint64)
    keep = ~bad
    return pos[keep].astype(np.uint64), acc[keep]


def build_index(fseq: ForwardSequence, k: int = DEFAULT_K) -> SeedIndex:
    check_k(k)
    positions, ordinals = seed_positions_and_ordinals(fseq.bases, k)
    n_ord = n_seed_ordinals(k)
    order = np.argsort(ordinals, kind="stable")
    forward_index = positions[order]
    sorted_ordinals = ordinals[order]
    range_dtype = np.uint32 if positions.size < 2**32 else np.uint64
    range_index = np.empty(n_ord + 1, dtype=range_dtype)
    # Blockwise to keep peak memory near the size of range_index itself (k=15).
    block = 1 << 22
    for lo in range(0, n_ord + 1, block):
        hi = min(lo + block, n_ord + 1)
        range_index[lo:hi] = np.searchsorted(
            sorted_ordinals, np.arange(lo, hi, dtype=np.uint64), side="left")
    return SeedIndex(k, range_index, forward_index, fseq.checksum, len(fseq),
                     list(fseq.boundaries))


def save_index(index: SeedIndex, path: str | os.PathLike) -> None:
    """Binary layout: see format.md ("Index file")."""
    width = index.range_index.dtype.itemsize
    with open(path, "wb") as fh:
        fh.write(INDEX_MAGIC)
        fh.write(struct.pack("<HBBQQI", INDEX_VERSION, index.k, width, index.checksum,
                             index.ref_length, len(index.boundaries)))
        for name, start in index.boundaries:
            raw = name.encode()
            fh.write(struct.pack("<I", len(raw)) + raw + struct.pack("<Q", start))
        fh.write(struct.pack("<QQ", index.range_index.size, index.forward_index.size))
        fh.write(index.range_index.astype(f"<u{width}", copy=False).tobytes())
        fh.write(index.forward_index.astype("<u8", copy=False).tobytes())


def load_index(path: str | os.PathLike, reference: ForwardSequence | None = None,
               k: int | None = None) -> SeedIndex:
    """Load an index; verify it against ``reference`` and ``k`` when given."""
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise InputError(f"cannot read index {path}: {exc}") from exc
    with fh:
        if fh.read(8) != INDEX_MAGIC:
            raise CorruptionError(f"{path}: not an index file")
        head = fh.read(struct.calcsize("<HBBQQI"))
        if len(head) != struct.calcsize("<HBBQQI"):
            raise CorruptionError(f"{path}: truncated index header")
        version, idx_k, width, checksum, ref_length, n_contigs = struct.unpack("<HBBQQI", head)
        if version != INDEX_VERSION:
            raise CorruptionError(f"{path}: index format version {version} unsupported")
        if k is not None and k != idx_k:
            raise ReferenceMismatchError(f"{path}: index built with k={idx_k}, expected k={k}")
        if reference is not None and (reference.checksum != checksum or len(reference) != ref_length):
            raise ReferenceMismatchError(f"{path}: index was built from a different reference")
        boundaries = []
        for _ in range(n_contigs):
            (n,) = struct.unpack("<I", fh.read(4))
            name = fh.read(n).decode()
            (start,) = struct.unpack("<Q", fh.read(8))
            boundaries.append((name, start))
        n_range, n_fwd = struct.unpack("<QQ", fh.read(16))
        if width not in (4, 8) or n_range != n_seed_ordinals(idx_k) + 1:
            raise CorruptionError(f"{path}: inconsistent range index size")
        range_index = np.fromfile(fh, dtype=f"<u{width}", count=n_range)
        forward_index = np.fromfile(fh, dtype="<u8", count=n_fwd)
    if range_index.size != n_range or forward_index.size != n_fwd:
        raise CorruptionError(f"{path}: truncated index arrays")
    if int(range_index[-1]) != n_fwd:
        raise CorruptionError(f"{path}: range index does not cover forward index")
    return SeedIndex(idx_k, range_index, forward_index, checksum, ref_length, boundaries)
