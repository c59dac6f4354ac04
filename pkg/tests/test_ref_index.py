import gzip
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import naive_seed_ordinal, naive_seed_scan
from simulate import random_reference, write_fasta

from fqzkit.errors import CorruptionError, InputError, ReferenceMismatchError
from fqzkit.ref_index import (ForwardSequence, build_forward_sequence, build_index,
                              forward_from_contigs, is_valid_seed, load_index, lookup,
                              n_seed_ordinals, save_index, seed_ordinal)


def test_forward_sequence_rules(tmp_path):
    fa = tmp_path / "ref.fa"
    fa.write_bytes(b">c1 first\nAC\nGT\n>c2\nNNAC\n>c3\nacgn\n")
    fseq = build_forward_sequence(fa)
    assert fseq.bases == b"ACGTAAACACGA"
    assert fseq.boundaries == [("c1", 0), ("c2", 4), ("c3", 8)]


def test_gzip_fasta_and_empty(tmp_path):
    fa = tmp_path / "ref.fa.gz"
    fa.write_bytes(gzip.compress(b">c1\nACGT\n"))
    assert build_forward_sequence(fa).bases == b"ACGT"
    empty = tmp_path / "empty.fa"
    empty.write_bytes(b"")
    with pytest.raises(InputError):
        build_forward_sequence(empty)


def test_length_matches_independent_line_scan(tmp_path):
    rng = np.random.default_rng(3)
    contigs = [(f"c{i}", random_reference(int(rng.integers(1, 5000)), rng)) for i in range(20)]
    fa = tmp_path / "ref.fa"
    write_fasta(fa, contigs, width=70)
    scanned = sum(len(line.strip()) for line in fa.read_bytes().splitlines()
                  if not line.startswith(b">"))
    assert len(build_forward_sequence(fa)) == scanned


def test_seed_ordinal_extremes():
    k = 15
    assert seed_ordinal(b"GA" + b"A" * 13) == 0
    assert seed_ordinal(b"GT" + b"T" * 13) == 3 * 4**13 - 1
    assert seed_ordinal(b"GG" + b"A" * 13) is None
    assert n_seed_ordinals(k) == 3 * 4**13


@given(st.text("ACGTN", min_size=11, max_size=11).map(str.encode))
def test_seed_predicate_agrees_with_ordinal(seed):
    o = seed_ordinal(seed)
    assert (o is None) == (not is_valid_seed(seed))
    assert o == naive_seed_ordinal(seed)
    if o is not None:
        assert 0 <= o < n_seed_ordinals(11)


def test_seed_ordinal_injective_k11():
    seen = set()
    rng = np.random.default_rng(0)
    for _ in range(5000):
        s = b"G" + b"ACT"[int(rng.integers(3))].to_bytes(1, "big") + random_reference(9, rng)
        seen.add((s, seed_ordinal(s)))
    by_ordinal = {}
    for s, o in seen:
        assert by_ordinal.setdefault(o, s) == s


def _toy_reference(k=15):
    """Background of 'A' (no 'G', so no seeds) with three seeds planted."""
    bases = bytearray(b"A" * 900)
    seed1 = b"GA" + b"A" * (k - 2)
    seed2 = b"GC" + b"A" * (k - 2)
    seed3 = b"GT" + b"A" * (k - 2)
    for p, s in [(59, seed1), (98, seed2), (180, seed3), (340, seed3), (790, seed3)]:
        bases[p:p + k] = s
    return forward_from_contigs([("toy", bytes(bases))]), (seed1, seed2, seed3)


def test_toy_index_three_seeds():
    fseq, seeds = _toy_reference()
    idx = build_index(fseq, 15)
    ords = [seed_ordinal(s) for s in seeds]
    assert lookup(idx, ords[0]).tolist() == [59]
    assert lookup(idx, ords[1]).tolist() == [98]
    assert lookup(idx, ords[2]).tolist() == [180, 340, 790]
    deltas = [int(idx.range_index[o + 1] - idx.range_index[o]) for o in ords]
    assert deltas == [1, 1, 3]
    assert idx.forward_index.tolist() == [59, 98, 180, 340, 790]
    assert lookup(idx, ords[0] + 1).tolist() == []


def test_no_g_gives_empty_index():
    idx = build_index(forward_from_contigs([("c", b"ACTTACA" * 50)]), 11)
    assert idx.forward_index.size == 0
    assert not idx.range_index.any()
    assert idx.range_index.size == n_seed_ordinals(11) + 1


def _assert_matches_oracle(bases, k):
    idx = build_index(forward_from_contigs([("c", bases)]), k)
    oracle = naive_seed_scan(bases, k)
    ri = idx.range_index
    assert ri[0] == 0 and ri[-1] == idx.forward_index.size
    assert np.all(np.diff(ri.astype(np.int64)) >= 0)
    counts = np.diff(ri.astype(np.int64))
    assert int(np.count_nonzero(counts)) == len(oracle)
    for o, positions in oracle.items():
        assert idx.lookup(o).tolist() == positions
    return idx


def test_index_equals_naive_scan_random():
    rng = np.random.default_rng(11)
    _assert_matches_oracle(random_reference(20_000, rng), 11)


@settings(max_examples=30, deadline=None)
@given(st.text("ACGT", min_size=0, max_size=300).map(str.encode))
def test_index_equals_naive_scan_property(bases):
    if not bases:
        bases = b"A"
    idx = _assert_matches_oracle(bases, 11)
    for o in np.flatnonzero(np.diff(idx.range_index.astype(np.int64))):
        for p in idx.lookup(int(o)).tolist():
            assert bases[p] == ord("G") and bases[p + 1] != ord("G")
            assert seed_ordinal(bases[p:p + 11]) == o


def test_repeats_all_stored():
    unit = b"GACTTACGATCA"
    bases = unit * 40
    idx = build_index(forward_from_contigs([("c", bases)]), 11)
    assert idx.lookup(seed_ordinal(unit[:11])).tolist() == list(range(0, 40 * 12 - 11, 12))


def test_save_load_roundtrip(tmp_path):
    fseq, _ = _toy_reference()
    idx = build_index(fseq, 15)
    path = tmp_path / "toy.idx"
    save_index(idx, path)
    loaded = load_index(path, reference=fseq, k=15)
    assert loaded == idx
    assert loaded.range_index.tobytes() == idx.range_index.tobytes()


def test_load_guards(tmp_path, small_ref):
    fseq, idx = small_ref
    path = tmp_path / "r.idx"
    save_index(idx, path)
    other = ForwardSequence(b"C" + fseq.bases[1:])
    with pytest.raises(ReferenceMismatchError):
        load_index(path, reference=other)
    with pytest.raises(ReferenceMismatchError):
        load_index(path, k=13)
    blob = bytearray(path.read_bytes())
    blob[8] = 99
    bad = tmp_path / "bad.idx"
    bad.write_bytes(bytes(blob))
    with pytest.raises(CorruptionError):
        load_index(bad)
    bad.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(CorruptionError):
        load_index(bad)
    bad.write_bytes(b"not an index")
    with pytest.raises(CorruptionError):
        load_index(bad)


@pytest.mark.slow
def test_load_much_faster_than_build_100mb(tmp_path):
    rng = np.random.default_rng(100)
    bases = np.frombuffer(b"ACGT", np.uint8)[rng.integers(0, 4, 100_000_000, dtype=np.uint8)]
    fseq = forward_from_contigs([("big", bases.tobytes())])
    del bases
    t0 = time.perf_counter()
    idx = build_index(fseq, 12)
    build_s = time.perf_counter() - t0
    path = tmp_path / "big.idx"
    save_index(idx, path)
    del idx
    t0 = time.perf_counter()
    load_index(path)
    load_s = time.perf_counter() - t0
    assert load_s < 0.2 * build_s, (load_s, build_s)
