"""Compression and decompression orchestration.

Compression runs one reader thread, ``threads`` worker threads and one writer
thread joined by two bounded queues. A counting semaphore taken by the reader
and released by the writer caps the number of chunks alive at once. With more
than one worker the CPU-heavy chunk work runs in a forked process pool so that
workers are not serialized by the interpreter lock.
"""
from __future__ import annotations

import concurrent.futures as cf
import multiprocessing
import os
import queue
import resource
import threading
import time
import zlib
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

from .aligner import AlignParams, Aligner
from .bitpack import decode_varint, encode_varint
from .codec import (DEFAULT_LAMBDA, STORE, CodecId, FieldPlan, maybe_encode,
                    measured_seconds_per_mb, select_plan, decode_stream)
from .container import (FIELD_NAMES, NAMES_FIELD, Archive, ArchiveWriter, ChunkHeader,
                        FieldEntry, FileHeader)
from .errors import CorruptionError, InputError, ReferenceMismatchError, UsageError
from .fastq_io import (DEFAULT_READS_PER_CHUNK, BatchReader, FastqRecord, ReadBatch,
                       open_input, open_output, split_header)
from .qual_segment import (BINS_FIELD, DEFAULT_MAX_ROUNDS, DOMINANT_FIELDS, HUFFMAN_FIELDS,
                           QUALITY_MODES, QualitySegment, QuantizerSpec, decode_qualities,
                           encode_qualities)
from .ref_index import (DEFAULT_K, ForwardSequence, SeedIndex, build_forward_sequence,
                        build_index, load_index)
from .seq_segment import (SEQ_FIELDS, FieldStream, SequenceSegment, build_sequence_segment,
                          decode_sequence_segment, swap_pair)

STAGES = ("Index", "Align", "Sequence", "Quality", "Names")
_POLL = 0.05


@dataclass
class PipelineConfig:
    threads: int = 1
    reads_per_chunk: int = DEFAULT_READS_PER_CHUNK
    read_buffer_capacity: int | None = None   # None: 2 x threads
    write_buffer_capacity: int | None = None  # None: 2 x threads
    quality_mode: str = "huffman"
    lossy_bins: int = 0
    keep_names: bool = True
    reorder: bool = False
    max_rounds: int = DEFAULT_MAX_ROUNDS
    seed_k: int = DEFAULT_K
    align: AlignParams = field(default_factory=AlignParams)
    score_lambda: float = DEFAULT_LAMBDA
    measure_codec_time: bool = False
    codec_overrides: dict[str, CodecId] = field(default_factory=dict)
    gzip_output: bool | None = None  # None: gzip iff the inputs were gzipped
    gzip_baseline: bool = True

    def __post_init__(self):
        if self.threads < 1:
            raise UsageError("threads must be >= 1")
        if self.reads_per_chunk < 1:
            raise UsageError("reads_per_chunk must be >= 1")
        if self.read_buffer_capacity is None:
            self.read_buffer_capacity = 2 * self.threads
        if self.write_buffer_capacity is None:
            self.write_buffer_capacity = 2 * self.threads
        if self.read_buffer_capacity < 1 or self.write_buffer_capacity < 1:
            raise UsageError("buffer capacities must be >= 1")
        if self.quality_mode not in QUALITY_MODES:
            raise UsageError(f"quality mode must be one of {QUALITY_MODES}")
        if not (self.lossy_bins == 0 or 1 <= self.lossy_bins <= 94):
            raise UsageError("lossy_bins must be 0 or in [1, 94]")
        if not 0 <= self.max_rounds <= 255:
            raise UsageError("max_rounds must be in [0, 255]")

    @property
    def in_flight_bound(self) -> int:
        return self.read_buffer_capacity + self.threads + self.write_buffer_capacity


@dataclass
class CompressionReport:
    n_reads: int = 0
    n_chunks: int = 0
    n_matched: int = 0
    raw_bytes: int = 0
    gzip_bytes: int = 0
    archive_bytes: int = 0
    stage_wall: dict[str, float] = field(default_factory=lambda: dict.fromkeys(STAGES, 0.0))
    stage_cpu: dict[str, float] = field(default_factory=lambda: dict.fromkeys(STAGES, 0.0))
    field_bytes: dict[str, int] = field(default_factory=lambda: defaultdict(int))
    field_raw_bytes: dict[str, int] = field(default_factory=lambda: defaultdict(int))
    plan: dict[str, str] = field(default_factory=dict)
    wall_seconds: float = 0.0
    peak_in_flight: int = 0
    in_flight_bound: int = 0
    peak_rss_mb: float = 0.0

    @property
    def cr_raw(self) -> float:
        return self.raw_bytes / self.archive_bytes if self.archive_bytes else 0.0

    @property
    def cr_gzip(self) -> float:
        return self.gzip_bytes / self.archive_bytes if self.archive_bytes else 0.0

    def group_bytes(self, prefix: str) -> int:
        return sum(v for k, v in self.field_bytes.items() if k.startswith(prefix))

    def to_kv(self) -> str:
        lines = [f"reads={self.n_reads}", f"chunks={self.n_chunks}", f"matched={self.n_matched}",
                 f"raw_bytes={self.raw_bytes}", f"gzip_bytes={self.gzip_bytes}",
                 f"archive_bytes={self.archive_bytes}", f"cr_raw={self.cr_raw:.4f}",
                 f"cr_gzip={self.cr_gzip:.4f}", f"wall_seconds={self.wall_seconds:.3f}",
                 f"peak_in_flight={self.peak_in_flight}", f"in_flight_bound={self.in_flight_bound}",
                 f"peak_rss_mb={self.peak_rss_mb:.1f}"]
        for s in STAGES:
            lines.append(f"stage.{s}.wall={self.stage_wall[s]:.3f}")
            lines.append(f"stage.{s}.cpu={self.stage_cpu[s]:.3f}")
        for name in FIELD_NAMES:
            if name in self.field_bytes:
                lines.append(f"field.{name}.bytes={self.field_bytes[name]}")
                lines.append(f"field.{name}.codec={self.plan.get(name, 'STORE')}")
        return "\n".join(lines)

    def to_text(self) -> str:
        matched = 100.0 * self.n_matched / self.n_reads if self.n_reads else 0.0
        out = [f"reads           {self.n_reads} in {self.n_chunks} chunks ({matched:.1f}% matched)",
               f"input           {self.raw_bytes} bytes raw, {self.gzip_bytes} bytes gzipped",
               f"archive         {self.archive_bytes} bytes",
               f"ratio           {self.cr_raw:.3f} vs raw, {self.cr_gzip:.3f} vs gzip",
               f"wall time       {self.wall_seconds:.2f} s",
               f"peak chunks     {self.peak_in_flight} in flight (bound {self.in_flight_bound})",
               f"peak RSS        {self.peak_rss_mb:.1f} MB",
               "stage           wall s     cpu s"]
        for s in STAGES:
            out.append(f"  {s:<13} {self.stage_wall[s]:8.2f}  {self.stage_cpu[s]:8.2f}")
        out.append("field                  bytes  codec")
        for name in FIELD_NAMES:
            if name in self.field_bytes:
                out.append(f"  {name:<18} {self.field_bytes[name]:>9}  {self.plan.get(name, 'STORE')}")
        return "\n".join(out)


# --- per-chunk work ---------------------------------------------------------------

@dataclass
class SegmentedChunk:
    ordinal: int
    read_count: int
    n_matched: int
    streams: dict[str, FieldStream]
    wall: dict[str, float]
    cpu: dict[str, float]


@dataclass
class EncodedChunk:
    header: ChunkHeader
    payload: bytes
    n_matched: int
    wall: dict[str, float]
    cpu: dict[str, float]
    raw_sizes: dict[str, int]


class _Stopwatch:
    def __init__(self):
        self.wall: dict[str, float] = defaultdict(float)
        self.cpu: dict[str, float] = defaultdict(float)
        self._stage = None

    def start(self, stage: str) -> None:
        self._stage = stage
        self._t = (time.perf_counter(), time.thread_time())

    def stop(self) -> None:
        w, c = self._t
        self.wall[self._stage] += time.perf_counter() - w
        self.cpu[self._stage] += time.thread_time() - c


def _field_stage(name: str) -> str:
    if name.startswith("seq."):
        return "Sequence"
    if name.startswith("qual."):
        return "Quality"
    return "Names"


def _reorder_key(item):
    results = item[1] if isinstance(item[1], tuple) else (item[1],)
    first = results[0]
    return (0, first.ref_start) if first.matched else (1, 0)


class ChunkCompressor:
    """Everything a worker needs to turn a ReadBatch into an encoded chunk."""

    def __init__(self, ref: bytes, index: SeedIndex, config: PipelineConfig,
                 plan: FieldPlan | None = None):
        self.aligner = Aligner(ref, index, config.align)
        self.config = config
        self.plan = plan

    def segment(self, batch: ReadBatch) -> SegmentedChunk:
        cfg = self.config
        sw = _Stopwatch()
        align = self.aligner.align
        sw.start("Align")
        if batch.paired:
            units = [(pair, (align(pair[0].seq, pair[0].qual), align(pair[1].seq, pair[1].qual)))
                     for pair in batch.records]
        else:
            units = [(rec, align(rec.seq, rec.qual)) for rec in batch.records]
        if cfg.reorder:
            units.sort(key=_reorder_key)
        sw.stop()

        sw.start("Sequence")
        if batch.paired:
            records = [rec for pair, _ in units for rec in pair]
            seq_results, swaps = [], []
            for _, (r1, r2) in units:
                a, b, swapped = swap_pair(r1, r2)
                seq_results += (a, b)
                swaps.append(1 if swapped else 0)
            seg = build_sequence_segment(seq_results, paired=True, swap_flags=swaps)
            n_matched = sum(r.matched for r in seq_results)
        else:
            records = [rec for rec, _ in units]
            results = [res for _, res in units]
            seg = build_sequence_segment(results)
            n_matched = sum(r.matched for r in results)
        streams = dict(seg.fields)
        sw.stop()

        sw.start("Quality")
        qseg = encode_qualities(b"".join(r.qual for r in records), cfg.quality_mode,
                                cfg.lossy_bins, cfg.max_rounds)
        streams.update(qseg.fields)
        sw.stop()

        if cfg.keep_names:
            sw.start("Names")
            streams[NAMES_FIELD] = FieldStream(len(records), b"\n".join(r.header for r in records))
            sw.stop()
        return SegmentedChunk(batch.batch_index, len(records), n_matched, streams,
                              dict(sw.wall), dict(sw.cpu))

    def encode(self, chunk: SegmentedChunk) -> EncodedChunk:
        sw = _Stopwatch()
        sw.wall.update(chunk.wall)
        sw.cpu.update(chunk.cpu)
        entries, blobs, raw_sizes = {}, [], {}
        for name in FIELD_NAMES:
            fs = chunk.streams.get(name)
            if fs is None or (fs.count == 0 and not fs.data):
                continue
            sw.start(_field_stage(name))
            planned = self.plan.get(name)
            enc, used = maybe_encode(fs.data, planned)
            blob = encode_varint(len(fs.data)) + enc
            sw.stop()
            entries[name] = FieldEntry(fs.count, len(blob), used == STORE and planned != STORE)
            blobs.append(blob)
            raw_sizes[name] = len(fs.data)
        header = ChunkHeader(chunk.ordinal, chunk.read_count, entries)
        header.to_bytes()  # fail early, inside the worker, if the field table overflows
        return EncodedChunk(header, b"".join(blobs), chunk.n_matched, dict(sw.wall),
                            dict(sw.cpu), raw_sizes)

    def compress(self, batch: ReadBatch) -> EncodedChunk:
        return self.encode(self.segment(batch))


def chunk_fields(fh: FileHeader, ch: ChunkHeader, payload: bytes) -> dict[str, FieldStream]:
    """Decode every present field of a chunk back to its raw stream."""
    out = {}
    pos = 0
    for name in FIELD_NAMES:
        e = ch.fields.get(name)
        if e is None:
            out[name] = FieldStream(0, b"")
            continue
        blob = payload[pos:pos + e.size]
        pos += e.size
        try:
            raw_len, p = decode_varint(blob, 0)
            codec = STORE if e.stored else fh.plan.get(name, STORE)
            out[name] = FieldStream(e.count, decode_stream(blob[p:], codec, raw_len))
        except CorruptionError as exc:
            raise CorruptionError(f"chunk {ch.ordinal}: field {name}: {exc}") from None
    return out


def decode_chunk(fh: FileHeader, ch: ChunkHeader, payload: bytes, ref: bytes) -> list[FastqRecord]:
    f = chunk_fields(fh, ch, payload)
    tag = f"chunk {ch.ordinal}"
    try:
        seqs = decode_sequence_segment(SequenceSegment({k: f[k] for k in SEQ_FIELDS}), ref)
    except CorruptionError as exc:
        raise CorruptionError(f"{tag}: sequence segment: {exc}") from None
    n = len(seqs)
    if n != ch.read_count:
        raise CorruptionError(f"{tag}: {n} sequences decoded, header says {ch.read_count}")
    if fh.paired and n % 2:
        raise CorruptionError(f"{tag}: odd read count in a paired archive")
    names_q = DOMINANT_FIELDS if fh.quality_mode == "dominant" else HUFFMAN_FIELDS
    try:
        quals = decode_qualities(QualitySegment(fh.quality_mode, {k: f[k] for k in names_q}))
        if f[BINS_FIELD].count:
            spec = QuantizerSpec.from_bytes(f[BINS_FIELD].data)
            if quals.translate(None, spec.retained):
                raise CorruptionError("quality outside the retained bins")
    except CorruptionError as exc:
        raise CorruptionError(f"{tag}: quality segment: {exc}") from None
    if len(quals) != sum(len(s) for s in seqs):
        raise CorruptionError(f"{tag}: quality length differs from sequence length")
    if fh.keep_names:
        headers = f[NAMES_FIELD].data.split(b"\n")
        if f[NAMES_FIELD].count != n or len(headers) != n:
            raise CorruptionError(f"{tag}: field names: {len(headers)} names for {n} reads")
    else:
        base = ch.ordinal * fh.reads_per_chunk
        if fh.paired:
            headers = [str(base + i // 2 + 1).encode() for i in range(n)]
        else:
            headers = [str(base + i + 1).encode() for i in range(n)]
    out = []
    pos = 0
    for h, s in zip(headers, seqs):
        name, comment = split_header(h)
        out.append(FastqRecord(name, s, quals[pos:pos + len(s)], comment))
        pos += len(s)
    return out


# --- process-pool plumbing --------------------------------------------------------

_CTX: ChunkCompressor | None = None
_DCTX: tuple | None = None


def _pool_compress(batch: ReadBatch) -> EncodedChunk:
    return _CTX.compress(batch)


def _pool_decode(ordinal: int) -> tuple[bytes, bytes, int]:
    archive, ref = _DCTX
    return _decode_to_fastq(archive, ref, ordinal)


def _pool_ready(_=None) -> int:
    return os.getpid()


def _decode_to_fastq(archive: Archive, ref: bytes, ordinal: int) -> tuple[bytes, bytes, int]:
    ch, payload = archive.read_chunk(ordinal)
    records = decode_chunk(archive.header, ch, payload, ref)
    if archive.header.paired:
        return (b"".join(r.to_bytes() for r in records[0::2]),
                b"".join(r.to_bytes() for r in records[1::2]), len(records))
    return b"".join(r.to_bytes() for r in records), b"", len(records)


def _make_pool(threads: int) -> cf.ProcessPoolExecutor:
    pool = cf.ProcessPoolExecutor(max_workers=threads,
                                  mp_context=multiprocessing.get_context("fork"))
    # Start every child now, while this process has a single thread.
    list(pool.map(_pool_ready, range(threads)))
    return pool


# --- bounded handoff ------------------------------------------------------------

class InFlightGauge:
    """Counting semaphore that also records its peak occupancy."""

    def __init__(self, bound: int):
        self.bound = bound
        self._sem = threading.BoundedSemaphore(bound)
        self._lock = threading.Lock()
        self.current = 0
        self.peak = 0

    def acquire(self, stop: threading.Event) -> bool:
        while not self._sem.acquire(timeout=_POLL):
            if stop.is_set():
                return False
        with self._lock:
            self.current += 1
            self.peak = max(self.peak, self.current)
        return True

    def release(self) -> None:
        with self._lock:
            self.current -= 1
        self._sem.release()


def _put(q: queue.Queue, item, stop: threading.Event) -> bool:
    while True:
        try:
            q.put(item, timeout=_POLL)
            return True
        except queue.Full:
            if stop.is_set():
                return False


def _get(q: queue.Queue, stop: threading.Event):
    while True:
        try:
            return q.get(timeout=_POLL)
        except queue.Empty:
            if stop.is_set():
                raise _Stopped from None


class _Stopped(Exception):
    pass


# --- compression ----------------------------------------------------------------

def _load_reference(reference) -> ForwardSequence:
    if isinstance(reference, ForwardSequence):
        return reference
    return build_forward_sequence(reference)


def _load_index(index, fseq: ForwardSequence, k: int) -> SeedIndex:
    if isinstance(index, SeedIndex):
        if index.checksum != fseq.checksum or index.ref_length != len(fseq):
            raise ReferenceMismatchError("index was built from a different reference")
        return index
    if index is None:
        return build_index(fseq, k)
    return load_index(index, reference=fseq)


def _is_gzip_path(path) -> bool:
    try:
        with open(path, "rb") as fh:
            return fh.read(2) == b"\x1f\x8b"
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from exc


class _InputMeter:
    """Counts canonical FASTQ bytes and, for plain inputs, a gzip baseline size."""

    def __init__(self, gzipped_inputs: Sequence[str], plain: bool, baseline: bool):
        self.raw = 0
        self.gz_known = sum(os.path.getsize(p) for p in gzipped_inputs)
        self._z = zlib.compressobj(6, zlib.DEFLATED, 31) if plain and baseline else None
        self.gz_measured = 0

    def feed(self, batch: ReadBatch) -> None:
        data = b"".join(r.to_bytes() for r in batch.flat_records())
        self.raw += len(data)
        if self._z is not None:
            self.gz_measured += len(self._z.compress(data))

    def gzip_bytes(self) -> int:
        if self._z is not None:
            self.gz_measured += len(self._z.flush())
            self._z = None
        return self.gz_known + self.gz_measured


def compress_file(inputs: Sequence, reference, index, config: PipelineConfig, sink) -> CompressionReport:
    """Compress one FASTQ (or two mates) into the archive at ``sink``."""
    global _CTX
    t_start = time.perf_counter()
    inputs = [os.fspath(p) for p in inputs]
    if len(inputs) not in (1, 2):
        raise UsageError("expected one FASTQ file or two mate files")
    report = CompressionReport(in_flight_bound=config.in_flight_bound)

    t0, c0 = time.perf_counter(), time.process_time()
    fseq = _load_reference(reference)
    idx = _load_index(index, fseq, config.seed_k)
    report.stage_wall["Index"] = time.perf_counter() - t0
    report.stage_cpu["Index"] = time.process_time() - c0

    gz_flags = [_is_gzip_path(p) for p in inputs]
    streams = [open_input(p) for p in inputs]
    reader = BatchReader(streams[0], config.reads_per_chunk,
                         streams[1] if len(streams) == 2 else None)
    meter = _InputMeter([p for p, g in zip(inputs, gz_flags) if g], not all(gz_flags),
                        config.gzip_baseline)

    compressor = ChunkCompressor(fseq.bases, idx, config)
    first = reader.next_batch()
    first_seg = None
    if first is not None:
        meter.feed(first)
        first_seg = compressor.segment(first)
        trial = {k: v.data for k, v in first_seg.streams.items()}
        timer = measured_seconds_per_mb if config.measure_codec_time else None
        plan = select_plan(trial, lam=config.score_lambda, timer=timer)
    else:
        plan = FieldPlan({})
    for key, codec in config.codec_overrides.items():
        for name in FIELD_NAMES:
            if name == key or (key.endswith(".") and name.startswith(key)):
                plan.assignments[name] = codec
    compressor.plan = plan

    header = FileHeader(
        keep_names=config.keep_names,
        gzip_output=any(gz_flags) if config.gzip_output is None else config.gzip_output,
        paired=len(inputs) == 2, reorder=config.reorder, quality_mode=config.quality_mode,
        lossy_bins=config.lossy_bins, seed_k=idx.k, max_rounds=config.max_rounds,
        max_hamming_frac=config.align.max_hamming_frac, max_edit_frac=config.align.max_edit_frac,
        max_candidates=config.align.max_candidates, reads_per_chunk=config.reads_per_chunk,
        ref_checksum=fseq.checksum, ref_length=len(fseq), score_lambda=config.score_lambda,
        plan={n: plan.get(n) for n in FIELD_NAMES})
    report.plan = {n: str(plan.get(n)) for n in FIELD_NAMES}

    try:
        out = open(sink, "wb")
    except OSError as exc:
        raise InputError(f"cannot open {sink} for writing: {exc.strerror}") from exc
    with out:
        writer = ArchiveWriter(out, header)
        pool = None
        if config.threads > 1 and first is not None:
            _CTX = compressor
            pool = _make_pool(config.threads)
        try:
            _run_compress(reader, first, first_seg, compressor, pool, config, writer, report, meter)
        finally:
            if pool is not None:
                pool.shutdown(cancel_futures=True)
            _CTX = None
        writer.finalize()
        report.archive_bytes = out.tell()

    report.raw_bytes = meter.raw
    report.gzip_bytes = meter.gzip_bytes()
    report.wall_seconds = time.perf_counter() - t_start
    rss = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    rss_children = resource.getrusage(resource.RUSAGE_CHILDREN).ru_maxrss
    report.peak_rss_mb = max(rss, rss_children) / 1024.0
    return report


def _run_compress(reader, first, first_seg, compressor, pool, config, writer, report, meter):
    stop = threading.Event()
    errors: list[BaseException] = []
    gauge = InFlightGauge(config.in_flight_bound)
    read_q: queue.Queue = queue.Queue(config.read_buffer_capacity)
    write_q: queue.Queue = queue.Queue(config.write_buffer_capacity)

    def fail(exc):
        errors.append(exc)
        stop.set()

    def reader_loop():
        try:
            if first_seg is not None:
                if not gauge.acquire(stop):
                    return
                if not _put(read_q, first_seg, stop):
                    return
            if first is not None:
                while True:
                    if not gauge.acquire(stop):
                        return
                    batch = reader.next_batch()
                    if batch is None:
                        gauge.release()
                        break
                    meter.feed(batch)
                    if not _put(read_q, batch, stop):
                        return
            for _ in range(config.threads):
                if not _put(read_q, None, stop):
                    return
        except BaseException as exc:  # noqa: BLE001 - forwarded to the caller
            fail(exc)

    def worker_loop():
        try:
            while True:
                item = _get(read_q, stop)
                if item is None:
                    _put(write_q, None, stop)
                    return
                if isinstance(item, SegmentedChunk):
                    result = compressor.encode(item)
                elif pool is not None:
                    result = pool.submit(_pool_compress, item).result()
                else:
                    result = compressor.compress(item)
                if not _put(write_q, result, stop):
                    return
        except _Stopped:
            return
        except BaseException as exc:  # noqa: BLE001
            fail(exc)

    def writer_loop():
        try:
            done = 0
            while done < config.threads:
                item = _get(write_q, stop)
                if item is None:
                    done += 1
                    continue
                writer.append(item.header, item.payload)
                gauge.release()
                report.n_chunks += 1
                report.n_reads += item.header.read_count
                report.n_matched += item.n_matched
                for s, v in item.wall.items():
                    report.stage_wall[s] = report.stage_wall.get(s, 0.0) + v
                for s, v in item.cpu.items():
                    report.stage_cpu[s] = report.stage_cpu.get(s, 0.0) + v
                for name, e in item.header.fields.items():
                    report.field_bytes[name] += e.size
                    report.field_raw_bytes[name] += item.raw_sizes[name]
        except _Stopped:
            return
        except BaseException as exc:  # noqa: BLE001
            fail(exc)

    threads = [threading.Thread(target=reader_loop, name="fqz-reader", daemon=True)]
    threads += [threading.Thread(target=worker_loop, name=f"fqz-worker-{i}", daemon=True)
                for i in range(config.threads)]
    threads.append(threading.Thread(target=writer_loop, name="fqz-writer", daemon=True))
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    report.peak_in_flight = gauge.peak
    if errors:
        raise errors[0]


# --- decompression ----------------------------------------------------------------

def check_reference(header: FileHeader, fseq: ForwardSequence) -> None:
    if header.ref_checksum != fseq.checksum or header.ref_length != len(fseq):
        raise ReferenceMismatchError(
            "reference does not match the one used for compression "
            f"(checksum {fseq.checksum:016x} vs {header.ref_checksum:016x})")


def decompress_file(archive_path, reference, outputs: Sequence, threads: int = 1,
                    gzip_output: bool | None = None) -> int:
    """Decode the archive into one FASTQ (two for paired archives); return the read count."""
    global _DCTX
    if threads < 1:
        raise UsageError("threads must be >= 1")
    outputs = [os.fspath(p) for p in outputs]
    with Archive(archive_path) as archive:
        fh = archive.header
        want = 2 if fh.paired else 1
        if len(outputs) != want:
            raise UsageError(f"archive holds {'paired' if fh.paired else 'single'}-end reads; "
                             f"expected {want} output file(s)")
        fseq = _load_reference(reference)
        check_reference(fh, fseq)
        gz = fh.gzip_output if gzip_output is None else gzip_output
        sinks = [open_output(p, gz) for p in outputs]
        n_reads = 0
        pool = None
        try:
            ordinals = range(len(archive))
            if threads > 1 and len(archive) > 1:
                _DCTX = (archive, fseq.bases)
                pool = _make_pool(threads)
                chunks = _ordered(pool, ordinals, 2 * threads)
            else:
                chunks = (_decode_to_fastq(archive, fseq.bases, i) for i in ordinals)
            for a, b, n in chunks:
                sinks[0].write(a)
                if fh.paired:
                    sinks[1].write(b)
                n_reads += n
        finally:
            if pool is not None:
                pool.shutdown(cancel_futures=True)
            _DCTX = None
            for s in sinks:
                s.close()
    return n_reads


def _ordered(pool: cf.ProcessPoolExecutor, ordinals, window: int):
    """Decode in parallel, yield in ordinal order, keep at most ``window`` chunks pending."""
    pending: dict[int, cf.Future] = {}
    it = iter(ordinals)
    nxt = 0
    for o in it:
        pending[o] = pool.submit(_pool_decode, o)
        if len(pending) >= window:
            break
    while pending:
        yield pending.pop(nxt).result()
        nxt += 1
        o = next(it, None)
        if o is not None:
            pending[o] = pool.submit(_pool_decode, o)


def decompress_records(archive_path, reference) -> list[FastqRecord]:
    """Decode the whole archive in memory; mates stay adjacent in paired archives."""
    fseq = _load_reference(reference)
    with Archive(archive_path) as archive:
        check_reference(archive.header, fseq)
        out = []
        for i in range(len(archive)):
            ch, payload = archive.read_chunk(i)
            out += decode_chunk(archive.header, ch, payload, fseq.bases)
    return out
