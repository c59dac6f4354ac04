"""FASTQ parsing, serialization and batching.

Records are kept as ``bytes`` end to end; the aligner and segmenters work on
raw bytes and never need text decoding.
"""
from __future__ import annotations

import gzip
import io
import os
import zlib
from dataclasses import dataclass
from typing import BinaryIO, Iterator, Sequence

from .errors import FastqFormatError, InputError

DEFAULT_READS_PER_CHUNK = 100_000

# Everything outside ACGTN after uppercasing, used with bytes.translate(None, ...).
_SEQ_ALPHABET = b"ACGTN"
_QUAL_LOW, _QUAL_HIGH = 0x21, 0x7E
_NOT_QUAL = bytes(b for b in range(256) if not _QUAL_LOW <= b <= _QUAL_HIGH)
_QUAL_CHARS = bytes(range(_QUAL_LOW, _QUAL_HIGH + 1))


@dataclass(slots=True)
class FastqRecord:
    name: bytes
    seq: bytes
    qual: bytes
    comment: bytes | None = None

    @property
    def header(self) -> bytes:
        """The identifier line without the leading '@'."""
        if self.comment is None:
            return self.name
        return self.name + b" " + self.comment

    def to_bytes(self) -> bytes:
        return b"@" + self.header + b"\n" + self.seq + b"\n+\n" + self.qual + b"\n"


@dataclass(frozen=True)
class ReadBatch:
    """An immutable run of records (or ``(r1, r2)`` pairs) handed to workers."""

    records: tuple
    batch_index: int
    paired: bool = False

    def __len__(self) -> int:
        return len(self.records)

    def flat_records(self) -> list[FastqRecord]:
        """Records in archive order; mates are adjacent in paired mode."""
        if not self.paired:
            return list(self.records)
        return [rec for pair in self.records for rec in pair]


def split_header(header: bytes) -> tuple[bytes, bytes | None]:
    name, sep, comment = header.partition(b" ")
    return name, (comment if sep else None)


def _is_gzip(path: str | os.PathLike) -> bool:
    with open(path, "rb") as fh:
        return fh.read(2) == b"\x1f\x8b"


class _Tracked(io.RawIOBase):
    """Counts compressed bytes consumed so gzip errors can report an offset."""

    def __init__(self, raw: BinaryIO):
        self.raw = raw
        self.offset = 0

    def readable(self) -> bool:
        return True

    def readinto(self, b) -> int:
        n = self.raw.readinto(b)
        self.offset += n or 0
        return n


def open_input(path: str | os.PathLike, gzipped: bool | None = None) -> Iterator[FastqRecord]:
    """Yield records from a plain or gzip FASTQ file in file order.

    ``gzipped=None`` sniffs the gzip magic bytes.
    """
    if gzipped is None:
        gzipped = _is_gzip(path)
    raw = open(path, "rb")
    if not gzipped:
        return _parse_guarded(raw, raw, None)
    tracked = _Tracked(raw)
    stream = gzip.GzipFile(fileobj=io.BufferedReader(tracked, 1 << 20), mode="rb")
    return _parse_guarded(stream, raw, tracked)


def _parse_guarded(stream, raw, tracked) -> Iterator[FastqRecord]:
    try:
        yield from parse_fastq(stream)
    except (gzip.BadGzipFile, EOFError, zlib.error) as exc:
        offset = tracked.offset if tracked is not None else -1
        raise FastqFormatError(f"malformed gzip stream near byte offset {offset}: {exc}") from exc
    finally:
        stream.close()
        raw.close()


def parse_fastq(stream: BinaryIO) -> Iterator[FastqRecord]:
    """Parse four-line FASTQ records from a binary stream."""
    ordinal = 0
    readline = stream.readline
    while True:
        head = readline()
        if not head:
            return
        ordinal += 1
        seq = readline()
        plus = readline()
        qual = readline()
        if not qual:
            raise FastqFormatError(f"record {ordinal}: truncated record at end of input")
        head = head.rstrip(b"\r\n")
        seq = seq.rstrip(b"\r\n").upper()
        qual = qual.rstrip(b"\r\n")
        if head[:1] != b"@":
            raise FastqFormatError(f"record {ordinal}: identifier line must start with '@'")
        if plus[:1] != b"+":
            raise FastqFormatError(f"record {ordinal}: separator line must start with '+'")
        if len(seq) != len(qual):
            raise FastqFormatError(
                f"record {ordinal}: sequence length {len(seq)} != quality length {len(qual)}")
        if seq.translate(None, _SEQ_ALPHABET):
            raise FastqFormatError(f"record {ordinal}: sequence contains bases outside ACGTN")
        if qual.translate(None, _QUAL_CHARS):
            raise FastqFormatError(f"record {ordinal}: quality byte outside 0x21..0x7E")
        name, comment = split_header(head[1:])
        yield FastqRecord(name, seq, qual, comment)


class BatchReader:
    """Pull fixed-size batches from one stream, or two in lockstep when paired."""

    def __init__(self, stream: Iterator[FastqRecord], reads_per_chunk: int = DEFAULT_READS_PER_CHUNK,
                 mate_stream: Iterator[FastqRecord] | None = None):
        if reads_per_chunk < 1:
            raise ValueError("reads_per_chunk must be positive")
        self.stream = iter(stream)
        self.mate_stream = iter(mate_stream) if mate_stream is not None else None
        self.reads_per_chunk = reads_per_chunk
        self._next_index = 0
        self._pairs_read = 0
        self._done = False

    @property
    def paired(self) -> bool:
        return self.mate_stream is not None

    def next_batch(self) -> ReadBatch | None:
        if self._done:
            return None
        records = []
        n = self.reads_per_chunk
        if self.mate_stream is None:
            for rec in self.stream:
                records.append(rec)
                if len(records) == n:
                    break
        else:
            while len(records) < n:
                r1 = next(self.stream, None)
                r2 = next(self.mate_stream, None)
                if r1 is None and r2 is None:
                    break
                if r1 is None or r2 is None:
                    raise FastqFormatError(
                        f"paired inputs diverge: one file ends after {self._pairs_read} pairs")
                records.append((r1, r2))
                self._pairs_read += 1
        if len(records) < n:
            self._done = True
        if not records:
            return None
        batch = ReadBatch(tuple(records), self._next_index, self.paired)
        self._next_index += 1
        return batch

    def __iter__(self) -> Iterator[ReadBatch]:
        while (batch := self.next_batch()) is not None:
            yield batch


def next_batch(reader: BatchReader) -> ReadBatch | None:
    return reader.next_batch()


def write_fastq(records: Sequence[FastqRecord], sink: BinaryIO) -> None:
    sink.write(b"".join(rec.to_bytes() for rec in records))


def open_output(path: str | os.PathLike, gzipped: bool) -> BinaryIO:
    try:
        if gzipped:
            return gzip.open(path, "wb", compresslevel=6)
        return open(path, "wb")
    except OSError as exc:
        raise InputError(f"cannot open {path} for writing: {exc}") from exc
