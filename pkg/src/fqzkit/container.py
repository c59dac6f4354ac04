"""Archive layout: fixed file header, 100-byte chunk headers, trailing chunk table.

The byte-level layout is documented in ``format.md`` at the repository root.
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Iterator

from .bitpack import decode_varint, encode_varint
from .codec import REGISTRY_VERSION, STORE, CodecId, FieldPlan
from .errors import CorruptionError, FqzError, InputError
from .qual_segment import BINS_FIELD, DOMINANT_FIELDS, HUFFMAN_FIELDS
from .seq_segment import SEQ_FIELDS

MAGIC = b"FQZKIT\x00\x01"
FORMAT_VERSION = 1
FILE_HEADER_SIZE = 128
CHUNK_HEADER_SIZE = 100
TABLE_ENTRY = struct.Struct("<IQQ")
NAMES_FIELD = "names"

# Field ids are positions in this tuple; the order is part of the format.
FIELD_NAMES: tuple[str, ...] = SEQ_FIELDS + DOMINANT_FIELDS + HUFFMAN_FIELDS + (BINS_FIELD, NAMES_FIELD)
FIELD_ID = {name: i for i, name in enumerate(FIELD_NAMES)}
N_FIELDS = len(FIELD_NAMES)

FLAG_KEEP_NAMES = 1 << 0
FLAG_GZIP_OUTPUT = 1 << 1
FLAG_PAIRED = 1 << 2
FLAG_REORDER = 1 << 3
FLAG_DOMINANT = 1 << 4

_HEAD = struct.Struct("<8sHHBBBBddHHIQQd")
_PLAN_OFFSET = _HEAD.size          # 64
_ADDR_OFFSET = FILE_HEADER_SIZE - 8
_CHUNK_FIXED = struct.Struct("<II3s3s")


@dataclass
class FileHeader:
    keep_names: bool = True
    gzip_output: bool = False
    paired: bool = False
    reorder: bool = False
    quality_mode: str = "huffman"
    lossy_bins: int = 0
    seed_k: int = 15
    max_rounds: int = 4
    max_hamming_frac: float = 0.125
    max_edit_frac: float = 0.25
    max_candidates: int = 4
    reads_per_chunk: int = 100_000
    ref_checksum: int = 0
    ref_length: int = 0
    score_lambda: float = 0.1
    plan: dict[str, CodecId] = field(default_factory=dict)
    format_version: int = FORMAT_VERSION
    registry_version: int = REGISTRY_VERSION
    chunk_table_address: int = 0

    @property
    def flags(self) -> int:
        return ((FLAG_KEEP_NAMES if self.keep_names else 0)
                | (FLAG_GZIP_OUTPUT if self.gzip_output else 0)
                | (FLAG_PAIRED if self.paired else 0)
                | (FLAG_REORDER if self.reorder else 0)
                | (FLAG_DOMINANT if self.quality_mode == "dominant" else 0))

    def field_plan(self) -> FieldPlan:
        return FieldPlan(dict(self.plan))

    def to_bytes(self) -> bytes:
        head = _HEAD.pack(MAGIC, self.format_version, self.flags, self.lossy_bins, self.seed_k,
                          self.max_rounds, self.registry_version, self.max_hamming_frac,
                          self.max_edit_frac, self.max_candidates, 0, self.reads_per_chunk,
                          self.ref_checksum, self.ref_length, self.score_lambda)
        plan = bytearray([N_FIELDS])
        for name in FIELD_NAMES:
            plan += self.plan.get(name, STORE).to_bytes()
        out = head + bytes(plan)
        out += bytes(_ADDR_OFFSET - len(out)) + struct.pack("<Q", self.chunk_table_address)
        assert len(out) == FILE_HEADER_SIZE
        return out

    @classmethod
    def from_bytes(cls, data: bytes) -> "FileHeader":
        if len(data) < FILE_HEADER_SIZE or data[:8] != MAGIC:
            raise CorruptionError("not an archive (bad magic)")
        (_, version, flags, bins, k, rounds, reg, ham, edit, cand, _, rpc, chk, rlen,
         lam) = _HEAD.unpack_from(data, 0)
        if version != FORMAT_VERSION:
            raise CorruptionError(f"unsupported format version {version}")
        if reg != REGISTRY_VERSION:
            raise CorruptionError(f"unsupported codec registry version {reg}")
        if data[_PLAN_OFFSET] != N_FIELDS:
            raise CorruptionError("field plan size mismatch")
        plan = {}
        for i, name in enumerate(FIELD_NAMES):
            o = _PLAN_OFFSET + 1 + 2 * i
            plan[name] = CodecId.from_bytes(data[o:o + 2])
        (addr,) = struct.unpack_from("<Q", data, _ADDR_OFFSET)
        return cls(keep_names=bool(flags & FLAG_KEEP_NAMES), gzip_output=bool(flags & FLAG_GZIP_OUTPUT),
                   paired=bool(flags & FLAG_PAIRED), reorder=bool(flags & FLAG_REORDER),
                   quality_mode="dominant" if flags & FLAG_DOMINANT else "huffman",
                   lossy_bins=bins, seed_k=k, max_rounds=rounds, max_hamming_frac=ham,
                   max_edit_frac=edit, max_candidates=cand, reads_per_chunk=rpc,
                   ref_checksum=chk, ref_length=rlen, score_lambda=lam, plan=plan,
                   format_version=version, registry_version=reg, chunk_table_address=addr)


@dataclass
class FieldEntry:
    count: int
    size: int
    stored: bool = False  # STORE fallback used instead of the planned codec


@dataclass
class ChunkHeader:
    ordinal: int
    read_count: int
    fields: dict[str, FieldEntry] = field(default_factory=dict)

    @property
    def payload_size(self) -> int:
        return sum(e.size for e in self.fields.values())

    def to_bytes(self) -> bytes:
        present = stored = 0
        body = bytearray()
        for name in FIELD_NAMES:
            e = self.fields.get(name)
            if e is None:
                continue
            fid = FIELD_ID[name]
            present |= 1 << fid
            if e.stored:
                stored |= 1 << fid
            body += encode_varint(e.count) + encode_varint(e.size)
        out = _CHUNK_FIXED.pack(self.ordinal, self.read_count, present.to_bytes(3, "little"),
                                stored.to_bytes(3, "little")) + bytes(body)
        if len(out) > CHUNK_HEADER_SIZE:
            raise FqzError(f"chunk {self.ordinal}: field table needs {len(out)} bytes, more than "
                           f"the {CHUNK_HEADER_SIZE}-byte chunk header; use fewer reads per chunk")
        return out + bytes(CHUNK_HEADER_SIZE - len(out))

    @classmethod
    def from_bytes(cls, data: bytes) -> "ChunkHeader":
        if len(data) != CHUNK_HEADER_SIZE:
            raise CorruptionError("truncated chunk header")
        ordinal, nreads, present_b, stored_b = _CHUNK_FIXED.unpack_from(data, 0)
        present = int.from_bytes(present_b, "little")
        stored = int.from_bytes(stored_b, "little")
        if present >> N_FIELDS or stored & ~present:
            raise CorruptionError(f"chunk {ordinal}: invalid field mask")
        pos = _CHUNK_FIXED.size
        fields = {}
        for fid, name in enumerate(FIELD_NAMES):
            if present >> fid & 1:
                count, pos = decode_varint(data, pos)
                size, pos = decode_varint(data, pos)
                if pos > CHUNK_HEADER_SIZE:
                    raise CorruptionError(f"chunk {ordinal}: field table overruns the header")
                fields[name] = FieldEntry(count, size, bool(stored >> fid & 1))
        if any(data[pos:]):
            raise CorruptionError(f"chunk {ordinal}: nonzero header padding")
        return cls(ordinal, nreads, fields)


@dataclass(frozen=True)
class TableEntry:
    ordinal: int
    offset: int
    size: int


class ChunkTable:
    def __init__(self, entries=()):
        self.entries: dict[int, TableEntry] = {}
        for e in entries:
            self.add(e)

    def add(self, entry: TableEntry) -> None:
        if entry.ordinal in self.entries:
            raise ValueError(f"duplicate chunk ordinal {entry.ordinal}")
        self.entries[entry.ordinal] = entry

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, ordinal: int) -> TableEntry:
        try:
            return self.entries[ordinal]
        except KeyError:
            raise IndexError(f"chunk ordinal {ordinal} out of range (0..{len(self) - 1})") from None

    def __iter__(self) -> Iterator[TableEntry]:
        return (self.entries[i] for i in sorted(self.entries))

    def to_bytes(self) -> bytes:
        # Entries are written in arrival (offset) order, matching the chunk layout.
        out = bytearray(struct.pack("<I", len(self)))
        for e in sorted(self.entries.values(), key=lambda e: e.offset):
            out += TABLE_ENTRY.pack(e.ordinal, e.offset, e.size)
        return bytes(out)

    @classmethod
    def from_bytes(cls, data: bytes, table_address: int) -> "ChunkTable":
        if len(data) < 4:
            raise CorruptionError("truncated chunk table")
        (n,) = struct.unpack_from("<I", data, 0)
        if len(data) != 4 + n * TABLE_ENTRY.size:
            raise CorruptionError("chunk table size does not match its entry count")
        table = cls()
        prev_end = FILE_HEADER_SIZE
        for i in range(n):
            e = TableEntry(*TABLE_ENTRY.unpack_from(data, 4 + i * TABLE_ENTRY.size))
            if e.ordinal >= n or e.ordinal in table.entries:
                raise CorruptionError(f"chunk table has bad ordinal {e.ordinal}")
            if e.offset < prev_end or e.size < CHUNK_HEADER_SIZE:
                raise CorruptionError(f"chunk {e.ordinal} overlaps its neighbour")
            prev_end = e.offset + e.size
            table.entries[e.ordinal] = e
        if prev_end > table_address:
            raise CorruptionError("chunk data runs into the chunk table")
        return table


# --- writing -----------------------------------------------------------------------

def write_header(sink: BinaryIO, header: FileHeader) -> None:
    if sink.tell() != 0:
        raise ValueError("the file header must be written at offset 0")
    header.chunk_table_address = 0
    sink.write(header.to_bytes())


def append_chunk(sink: BinaryIO, chunk_header: ChunkHeader, payload: bytes) -> int:
    if chunk_header.payload_size != len(payload):
        raise ValueError("chunk header sizes do not add up to the payload size")
    offset = sink.tell()
    sink.write(chunk_header.to_bytes())
    sink.write(payload)
    return offset


def finalize(sink: BinaryIO, table: ChunkTable) -> None:
    address = sink.seek(0, os.SEEK_END)
    sink.write(table.to_bytes())
    sink.flush()
    sink.seek(_ADDR_OFFSET)
    sink.write(struct.pack("<Q", address))
    sink.flush()
    sink.seek(0, os.SEEK_END)


class ArchiveWriter:
    """Owns the sink; chunks land in arrival order and the table restores logical order."""

    def __init__(self, sink: BinaryIO, header: FileHeader):
        self.sink = sink
        self.header = header
        self.table = ChunkTable()
        write_header(sink, header)

    def append(self, chunk_header: ChunkHeader, payload: bytes) -> int:
        offset = append_chunk(self.sink, chunk_header, payload)
        self.table.add(TableEntry(chunk_header.ordinal, offset, CHUNK_HEADER_SIZE + len(payload)))
        return offset

    def finalize(self) -> None:
        if sorted(self.table.entries) != list(range(len(self.table))):
            raise FqzError("chunk ordinals are not contiguous")
        finalize(self.sink, self.table)


# --- reading -----------------------------------------------------------------------

class Archive:
    """Random-access reader; ``read_chunk`` uses positional reads and is thread-safe."""

    def __init__(self, path):
        self.path = os.fspath(path)
        try:
            self.fd = os.open(self.path, os.O_RDONLY)
        except OSError as exc:
            raise InputError(f"{self.path}: {exc.strerror}") from exc
        try:
            self.file_size = os.fstat(self.fd).st_size
            self.header = FileHeader.from_bytes(os.pread(self.fd, FILE_HEADER_SIZE, 0))
            addr = self.header.chunk_table_address
            if addr == 0:
                raise CorruptionError("incomplete archive (chunk table address not written)")
            if not FILE_HEADER_SIZE <= addr <= self.file_size - 4:
                raise CorruptionError("chunk table address outside the file")
            self.table = ChunkTable.from_bytes(os.pread(self.fd, self.file_size - addr, addr), addr)
        except BaseException:
            os.close(self.fd)
            raise

    def __len__(self) -> int:
        return len(self.table)

    def read_chunk(self, ordinal: int) -> tuple[ChunkHeader, bytes]:
        entry = self.table[ordinal]
        raw = os.pread(self.fd, entry.size, entry.offset)
        if len(raw) != entry.size:
            raise CorruptionError(f"chunk {ordinal}: short read")
        ch = ChunkHeader.from_bytes(raw[:CHUNK_HEADER_SIZE])
        if ch.ordinal != ordinal:
            raise CorruptionError(f"chunk {ordinal}: header carries ordinal {ch.ordinal}")
        payload = raw[CHUNK_HEADER_SIZE:]
        if ch.payload_size != len(payload):
            raise CorruptionError(f"chunk {ordinal}: field sizes disagree with the chunk table")
        return ch, payload

    def close(self) -> None:
        if self.fd >= 0:
            os.close(self.fd)
            self.fd = -1

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def open_archive(path) -> Archive:
    return Archive(path)


def read_chunk(archive: Archive, ordinal: int) -> tuple[ChunkHeader, bytes]:
    return archive.read_chunk(ordinal)
