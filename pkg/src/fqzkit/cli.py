"""Command-line front end: ``fqzkit {index,compress,decompress,info}``.

Exit codes: 0 success, 1 usage, 2 input/output, 3 corruption, 4 reference mismatch.
"""
from __future__ import annotations

import argparse
import os
import sys

from . import __version__
from .aligner import AlignParams
from .codec import CodecId
from .container import FIELD_NAMES, Archive
from .errors import FqzError, InputError, UsageError
from .pipeline import PipelineConfig, compress_file, decompress_file
from .qual_segment import QUALITY_MODES
from .ref_index import DEFAULT_K, MAX_K, MIN_K, build_forward_sequence, build_index, save_index

THREADS_ENV = "FQZKIT_THREADS"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise UsageError(f"{THREADS_ENV}={env!r} is not an integer") from None
        if n < 1:
            raise UsageError(f"{THREADS_ENV} must be >= 1")
        return n
    return min(16, os.cpu_count() or 1)


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _fraction(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid number {text!r}") from None
    if not 0 <= v < 1:
        raise argparse.ArgumentTypeError("must be in [0, 1)")
    return v


def _codec_override(text: str) -> tuple[str, CodecId]:
    key, sep, codec = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError("expected FIELD=CODEC[:LEVEL]")
    if key not in FIELD_NAMES and not (key.endswith(".") and any(f.startswith(key) for f in FIELD_NAMES)):
        raise argparse.ArgumentTypeError(f"unknown field {key!r}")
    try:
        return key, CodecId.parse(codec)
    except (KeyError, ValueError, StopIteration):
        raise argparse.ArgumentTypeError(f"unknown codec {codec!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fqzkit", description="Reference-based FASTQ compressor.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    ix = sub.add_parser("index", help="build a seed index for a reference FASTA")
    ix.add_argument("reference", help="reference FASTA (optionally gzipped)")
    ix.add_argument("-o", "--output", required=True, help="index file to write")
    ix.add_argument("-k", type=int, default=DEFAULT_K,
                    help=f"seed length in [{MIN_K}, {MAX_K}] (default: {DEFAULT_K})")

    c = sub.add_parser("compress", help="compress FASTQ file(s) into an archive")
    c.add_argument("inputs", nargs="+", help="FASTQ file, or two mate files with --pair")
    c.add_argument("--ref", required=True, help="reference FASTA")
    c.add_argument("--index", help="prebuilt index (default: build in memory)")
    c.add_argument("-o", "--output", required=True, help="archive to write")
    c.add_argument("--pair", action="store_true", help="inputs are two mate files")
    c.add_argument("--threads", type=_positive, default=None,
                   help=f"worker count (default: ${THREADS_ENV} or min(16, CPUs))")
    c.add_argument("--reads-per-chunk", type=_positive, default=100_000,
                   help="reads per chunk; pairs in paired mode (default: 100000)")
    c.add_argument("--quality", choices=QUALITY_MODES, default="huffman",
                   help="lossless quality coder (default: huffman)")
    c.add_argument("--bins", type=int, default=0,
                   help="keep only the N most frequent quality scores (default: 0, lossless)")
    c.add_argument("--max-rounds", type=int, default=4,
                   help="dominant-mode round limit (default: 4)")
    c.add_argument("--drop-names", action="store_true",
                   help="do not store read names; numbered names are emitted on decompression")
    c.add_argument("--reorder", action="store_true",
                   help="sort reads by reference position within each chunk")
    c.add_argument("-k", type=int, default=DEFAULT_K,
                   help=f"seed length when no --index is given (default: {DEFAULT_K})")
    c.add_argument("--max-hamming", type=_fraction, default=1 / 8,
                   help="Hamming acceptance, fraction of read length (default: 0.125)")
    c.add_argument("--max-edit", type=_fraction, default=1 / 4,
                   help="edit-distance acceptance, fraction of read length; 0 disables "
                        "indel-aware matching (default: 0.25)")
    c.add_argument("--max-candidates", type=_positive, default=4,
                   help="candidate positions verified per orientation (default: 4)")
    c.add_argument("--codec", action="append", type=_codec_override, default=[],
                   metavar="FIELD=CODEC",
                   help="force a codec for a field or field prefix such as 'qual.' (repeatable)")
    c.add_argument("--lambda", dest="score_lambda", type=float, default=0.1,
                   help="time weight of the codec score, per MB (default: 0.1)")
    c.add_argument("--gzip-output", choices=("auto", "yes", "no"), default="auto",
                   help="whether decompression writes gzip (default: auto, same as inputs)")
    c.add_argument("--report", choices=("text", "kv", "none"), default="text",
                   help="report format on stderr (default: text)")

    d = sub.add_parser("decompress", help="restore FASTQ file(s) from an archive")
    d.add_argument("archive", help="archive to read")
    d.add_argument("--ref", required=True, help="reference FASTA used for compression")
    d.add_argument("-o", "--output", nargs="+", required=True,
                   help="output FASTQ file, or two files for a paired archive")
    d.add_argument("--threads", type=_positive, default=None,
                   help=f"decoder count (default: ${THREADS_ENV} or min(16, CPUs))")
    d.add_argument("--gzip", choices=("auto", "yes", "no"), default="auto",
                   help="gzip the output (default: auto, as recorded in the archive)")

    i = sub.add_parser("info", help="print archive header and chunk table")
    i.add_argument("archive", help="archive to inspect")
    return p


_TRISTATE = {"auto": None, "yes": True, "no": False}


def _cmd_index(args) -> None:
    if not MIN_K <= args.k <= MAX_K:
        raise UsageError(f"-k must be in [{MIN_K}, {MAX_K}]")
    fseq = build_forward_sequence(args.reference)
    save_index(build_index(fseq, args.k), args.output)


def _cmd_compress(args) -> None:
    if args.pair and len(args.inputs) != 2:
        raise UsageError("--pair needs exactly two input files")
    if not args.pair and len(args.inputs) != 1:
        raise UsageError("several inputs given; use --pair for two mate files")
    if not MIN_K <= args.k <= MAX_K:
        raise UsageError(f"-k must be in [{MIN_K}, {MAX_K}]")
    if args.max_edit and args.max_edit < args.max_hamming:
        raise UsageError("--max-edit must be 0 or at least --max-hamming")
    if args.max_hamming == 0:
        raise UsageError("--max-hamming must be positive")
    for path in args.inputs + [args.ref] + ([args.index] if args.index else []):
        if not os.path.isfile(path):
            raise InputError(f"{path}: no such file")
    config = PipelineConfig(
        threads=args.threads or default_threads(), reads_per_chunk=args.reads_per_chunk,
        quality_mode=args.quality, lossy_bins=args.bins, keep_names=not args.drop_names,
        reorder=args.reorder, max_rounds=args.max_rounds, seed_k=args.k,
        align=AlignParams(args.max_hamming, args.max_edit, None, args.max_candidates),
        score_lambda=args.score_lambda, codec_overrides=dict(args.codec),
        gzip_output=_TRISTATE[args.gzip_output])
    report = compress_file(args.inputs, args.ref, args.index, config, args.output)
    if args.report == "text":
        print(report.to_text(), file=sys.stderr)
    elif args.report == "kv":
        print(report.to_kv(), file=sys.stderr)


def _cmd_decompress(args) -> None:
    decompress_file(args.archive, args.ref, args.output, args.threads or default_threads(),
                    _TRISTATE[args.gzip])


def _cmd_info(args) -> None:
    with Archive(args.archive) as archive:
        h = archive.header
        print(f"format_version     {h.format_version}")
        print(f"registry_version   {h.registry_version}")
        print(f"paired             {int(h.paired)}")
        print(f"keep_names         {int(h.keep_names)}")
        print(f"gzip_output        {int(h.gzip_output)}")
        print(f"reorder            {int(h.reorder)}")
        print(f"quality_mode       {h.quality_mode}")
        print(f"lossy_bins         {h.lossy_bins}")
        print(f"max_rounds         {h.max_rounds}")
        print(f"seed_k             {h.seed_k}")
        print(f"max_hamming_frac   {h.max_hamming_frac:g}")
        print(f"max_edit_frac      {h.max_edit_frac:g}")
        print(f"max_candidates     {h.max_candidates}")
        print(f"reads_per_chunk    {h.reads_per_chunk}")
        print(f"score_lambda       {h.score_lambda:g}")
        print(f"ref_checksum       {h.ref_checksum:016x}")
        print(f"ref_length         {h.ref_length}")
        print(f"chunk_table        {h.chunk_table_address}")
        print("plan")
        for name in FIELD_NAMES:
            print(f"  {name:<18} {h.plan[name]}")
        print(f"chunks             {len(archive)}")
        print("  ordinal        offset      size     reads")
        for e in archive.table:
            ch, _ = archive.read_chunk(e.ordinal)
            print(f"  {e.ordinal:>7} {e.offset:>13} {e.size:>9} {ch.read_count:>9}")


_COMMANDS = {"index": _cmd_index, "compress": _cmd_compress,
             "decompress": _cmd_decompress, "info": _cmd_info}


def run(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        _COMMANDS[args.command](args)
    except FqzError as exc:
        print(f"fqzkit: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"fqzkit: error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help / --version
        return exc.code or 0
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
