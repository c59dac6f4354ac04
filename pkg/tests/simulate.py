"""Synthetic references, reads and quality strings for tests."""
from __future__ import annotations

import numpy as np

from fqzkit.aligner import reverse_complement
from fqzkit.fastq_io import FastqRecord

BASES = np.frombuffer(b"ACGT", dtype=np.uint8)

# Illumina-style binned scores, skewed towards high quality.
SKEWED8_SYMBOLS = b"#-5<AEFJ"
SKEWED8_PROBS = np.array([0.02, 0.02, 0.04, 0.06, 0.08, 0.13, 0.25, 0.40])


def random_reference(length: int, rng: np.random.Generator) -> bytes:
    return BASES[rng.integers(0, 4, length)].tobytes()


def write_fasta(path, contigs: list[tuple[str, bytes]], width: int = 60) -> None:
    with open(path, "wb") as fh:
        for name, seq in contigs:
            fh.write(b">" + name.encode() + b"\n")
            for i in range(0, len(seq), width):
                fh.write(seq[i:i + width] + b"\n")


def skewed8_quals(n: int, rng: np.random.Generator) -> bytes:
    sym = np.frombuffer(SKEWED8_SYMBOLS, dtype=np.uint8)
    return sym[rng.choice(8, size=n, p=SKEWED8_PROBS)].tobytes()


def skewed94_probs(center: int = 0x49, sigma: float = 12.0) -> np.ndarray:
    """Discretized Gaussian over all 94 printable scores, every symbol nonzero."""
    x = np.arange(0x21, 0x7F)
    p = np.exp(-0.5 * ((x - center) / sigma) ** 2) + 1e-3
    return p / p.sum()


def skewed94_quals(n: int, rng: np.random.Generator) -> bytes:
    return (rng.choice(94, size=n, p=skewed94_probs()) + 0x21).astype(np.uint8).tobytes()


def uniform94_quals(n: int, rng: np.random.Generator) -> bytes:
    return rng.integers(0x21, 0x7F, n).astype(np.uint8).tobytes()


def mutate(seq: bytes, rng: np.random.Generator, sub_rate: float, indel_rate: float,
           indel_len=(1, 3)) -> bytes:
    """Apply per-base substitutions and indels."""
    u = rng.random(len(seq))
    events = np.flatnonzero(u < indel_rate + sub_rate)
    if events.size == 0:
        return seq
    out = bytearray()
    last = 0
    for i in events.tolist():
        if i < last:
            continue
        out += seq[last:i]
        if u[i] < indel_rate:
            n = int(rng.integers(indel_len[0], indel_len[1] + 1))
            if rng.random() < 0.5:
                out += random_reference(n, rng)
                out.append(seq[i])
                last = i + 1
            else:
                last = i + n
        else:
            code = b"ACGT".index(seq[i])
            out.append(b"ACGT"[(code + int(rng.integers(1, 4))) % 4])
            last = i + 1
    out += seq[last:]
    return bytes(out)


def with_one_indel(seq: bytes, rng: np.random.Generator, indel_len=(1, 3)) -> bytes:
    """Insert or delete 1-3 bases once, inside the central half of the read.

    Central placement means every base after the event shifts for at least a
    quarter of the read, so the read cannot pass a Hamming-only check.
    """
    L = len(seq)
    pos = int(rng.integers(L // 4, 3 * L // 4))
    n = int(rng.integers(indel_len[0], indel_len[1] + 1))
    if rng.random() < 0.5:
        return seq[:pos] + random_reference(n, rng) + seq[pos:]
    return seq[:pos] + seq[pos + n:]


def simulate_reads(ref: bytes, n: int, rng: np.random.Generator, *, len_range=(100, 150),
                   sub_rate=0.005, indel_rate=0.0005, rc_frac=0.5, quals="skewed8",
                   one_indel=False, prefix="sim") -> list[FastqRecord]:
    qual_fn = {"skewed8": skewed8_quals, "skewed94": skewed94_quals,
               "uniform94": uniform94_quals}[quals]
    records = []
    lengths = rng.integers(len_range[0], len_range[1] + 1, n)
    margin = len_range[1] + 10
    starts = rng.integers(0, len(ref) - margin, n)
    flips = rng.random(n) < rc_frac
    for idx in range(n):
        L = int(lengths[idx])
        s = int(starts[idx])
        seq = ref[s:s + L]
        if one_indel:
            seq = with_one_indel(seq, rng)
        else:
            seq = mutate(seq, rng, sub_rate, indel_rate)[:L]
        if flips[idx]:
            seq = reverse_complement(seq)
        name = f"{prefix}.{idx} pos={s} strand={'-' if flips[idx] else '+'}".encode()
        head, _, comment = name.partition(b" ")
        records.append(FastqRecord(head, seq, qual_fn(len(seq), rng), comment))
    return records


def write_fastq_file(path, records) -> None:
    import gzip
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wb") as fh:
        fh.write(b"".join(r.to_bytes() for r in records))


def pack2bit_size(seqs) -> int:
    """Bytes needed to store the bases at two bits each."""
    return sum((len(s) + 3) // 4 for s in seqs)
