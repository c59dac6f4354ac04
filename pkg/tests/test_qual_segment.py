import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import entropy_bits, huffman_total_bits

from fqzkit.bitpack import decode_varint
from fqzkit.errors import CorruptionError
from fqzkit.qual_segment import (BINS_FIELD, QualitySegment, QuantizerSpec, apply_quantizer,
                                 build_quantizer, canonical_codes, decode_qualities,
                                 dominant_decode, dominant_encode, encode_qualities,
                                 huffman_decode, huffman_encode, huffman_table_size,
                                 limited_code_lengths)
from fqzkit.seq_segment import FieldStream

quals = st.binary(max_size=400).map(lambda b: bytes(0x21 + x % 94 for x in b))
small_alpha = st.lists(st.sampled_from(b"#-5<AEFJ"), max_size=3000).map(bytes)


def payload_bits(seg):
    blob = seg.fields["qual.huffman"].data
    _, p = decode_varint(blob, huffman_table_size(seg))
    return blob[p:]


# --- dominant ---------------------------------------------------------------------

def test_dominant_example():
    seg = dominant_encode(b"IIIIJIII")
    f = seg.fields
    assert f["qual.dom_scores"].data == b"I"
    assert f["qual.dom_bitmap"].count == 8 and f["qual.dom_bitmap"].data == bytes([0b11110111])
    assert f["qual.remainder"].data == b"J"
    assert dominant_decode(seg) == b"IIIIJIII"


def test_dominant_all_identical():
    seg = dominant_encode(b"F" * 50)
    assert seg.fields["qual.dom_scores"].data == b"F"
    assert seg.fields["qual.dom_bitmap"].data == b"\xff" * 6 + b"\xc0"
    assert seg.fields["qual.remainder"].data == b""
    assert dominant_decode(seg) == b"F" * 50


def test_dominant_stops_below_half():
    seg = dominant_encode(b"AABBCC")
    assert seg.fields["qual.dom_scores"].count == 0
    assert seg.fields["qual.remainder"].data == b"AABBCC"


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from(b"#-5<AEFJ"), max_size=10_000).map(bytes), st.integers(0, 6))
def test_dominant_roundtrip_and_rounds(data, max_rounds):
    seg = dominant_encode(data, max_rounds)
    f = seg.fields
    n_rounds = f["qual.dom_scores"].count
    assert n_rounds <= max_rounds
    assert n_rounds == f["qual.dom_lengths"].count == len(f["qual.dom_scores"].data)
    lengths = []
    p = 0
    for _ in range(n_rounds):
        v, p = decode_varint(f["qual.dom_lengths"].data, p)
        lengths.append(v)
    assert all(a > b for a, b in zip(lengths, lengths[1:] + [f["qual.remainder"].count]))
    if n_rounds:
        assert f["qual.dom_scores"].data[-1] not in f["qual.remainder"].data
    assert dominant_decode(seg) == data


def test_dominant_short_bitmap_is_corruption():
    seg = dominant_encode(b"IIIIJIII")
    seg.fields["qual.dom_bitmap"] = FieldStream(4, b"\xf0")
    with pytest.raises(CorruptionError):
        dominant_decode(seg)


# --- huffman ----------------------------------------------------------------------

def test_huffman_small_example_against_oracle():
    data = b"IIIIJK"
    seg = huffman_encode(data)
    bits = 4 * 1 + 1 * 2 + 1 * 2
    assert bits == huffman_total_bits({ord("I"): 4, ord("J"): 1, ord("K"): 1}) == 8
    assert len(payload_bits(seg)) == 1
    assert huffman_decode(seg) == data


def test_huffman_single_symbol():
    seg = huffman_encode(b"F" * 21)
    assert len(payload_bits(seg)) == math.ceil(21 / 8)
    assert huffman_decode(seg) == b"F" * 21


def test_huffman_empty():
    assert huffman_decode(huffman_encode(b"")) == b""


@settings(max_examples=200, deadline=None)
@given(quals)
def test_huffman_roundtrip(data):
    seg = huffman_encode(data)
    assert seg.fields["qual.huffman"].data[0] <= 94
    assert huffman_decode(seg) == data


@settings(max_examples=100, deadline=None)
@given(small_alpha)
def test_huffman_optimal_and_entropy_bound(data):
    seg = huffman_encode(data)
    counts = {s: data.count(bytes([s])) for s in set(data)}
    total = sum(counts[s] * ln for s, (_, ln) in canonical_codes(limited_code_lengths(counts)).items())
    if len(counts) > 1:
        assert total == huffman_total_bits(counts)
    else:
        assert total == len(data)
    assert len(payload_bits(seg)) == math.ceil(total / 8)
    assert total <= math.ceil(len(data) * (entropy_bits(data) + 1))


def test_length_limit_on_fibonacci_frequencies():
    fib = [1, 1]
    while len(fib) < 30:
        fib.append(fib[-1] + fib[-2])
    freqs = {0x21 + i: f for i, f in enumerate(fib)}
    lengths = limited_code_lengths(freqs)
    assert max(lengths.values()) <= 16
    assert sum(2.0 ** -ln for ln in lengths.values()) == 1.0
    data = b"".join(bytes([s]) * min(f, 50) for s, f in freqs.items())
    assert huffman_decode(huffman_encode(data)) == data


def test_kraft_violation_is_corruption():
    seg = huffman_encode(b"IIIIJK")
    blob = bytearray(seg.fields["qual.huffman"].data)
    blob[4] = 1  # J shortened to 1 bit alongside I
    bad = QualitySegment("huffman", {"qual.huffman": FieldStream(6, bytes(blob))})
    with pytest.raises(CorruptionError):
        huffman_decode(bad)


def test_huffman_truncated_payload_is_corruption():
    data = bytes(np.random.default_rng(0).integers(0x21, 0x7F, 500).astype(np.uint8))
    seg = huffman_encode(data)
    blob = seg.fields["qual.huffman"].data
    bad = QualitySegment("huffman", {"qual.huffman": FieldStream(500, blob[:-20])})
    with pytest.raises(CorruptionError):
        huffman_decode(bad)


# --- quantizer --------------------------------------------------------------------

def test_quantizer_one_bin():
    spec = build_quantizer({"F": 10, "I": 90, "#": 5}, 1)
    assert spec.retained == b"I"
    assert apply_quantizer(spec, b"FI#") == b"III"


def test_quantizer_identity_when_bins_cover_alphabet():
    spec = build_quantizer({"F": 10, "I": 90, "#": 5}, 3)
    assert apply_quantizer(spec, b"FI#FF") == b"FI#FF"
    spec = build_quantizer({"F": 10, "I": 90, "#": 5}, 40)
    assert spec.retained == b"#FI"


def test_quantizer_nearest_example():
    spec = build_quantizer({"A": 5, "B": 5, "Z": 1}, 2)
    assert spec.retained == b"AB"
    assert apply_quantizer(spec, b"Z") == b"B"


def test_quantizer_ties():
    spec = build_quantizer({"A": 5, "C": 5, "E": 5}, 2)
    assert spec.retained == b"AC"
    spec = build_quantizer({"A": 5, "E": 5}, 2)
    assert apply_quantizer(spec, b"C") == b"A"


def test_quantizer_serialization():
    spec = build_quantizer({"A": 5, "B": 5, "Z": 1}, 2)
    assert spec.to_bytes() == b"\x02AB"
    assert QuantizerSpec.from_bytes(spec.to_bytes()) == spec
    assert len(spec.mapping) == 94
    with pytest.raises(CorruptionError):
        QuantizerSpec.from_bytes(b"\x02BA")
    with pytest.raises(CorruptionError):
        QuantizerSpec.from_bytes(b"\x03AB")


@settings(max_examples=150, deadline=None)
@given(st.binary(min_size=1, max_size=300).map(lambda b: bytes(0x21 + x % 94 for x in b)),
       st.integers(1, 94))
def test_quantizer_properties(data, n_bins):
    hist = np.bincount(np.frombuffer(data, np.uint8), minlength=256)
    spec = build_quantizer(hist, n_bins)
    out = apply_quantizer(spec, data)
    assert set(out) <= set(spec.retained)
    assert apply_quantizer(spec, out) == out
    kept = list(spec.retained)
    assert all(spec.table[r] == r for r in kept)
    for b in range(0x21, 0x7F):
        m = spec.table[b]
        assert abs(m - b) == min(abs(r - b) for r in kept)
    gap = max((b - a for a, b in zip(kept, kept[1:])), default=0)
    for x, y in zip(data, out):
        if kept[0] <= x <= kept[-1]:
            assert abs(x - y) <= gap


@pytest.mark.parametrize("mode", ["huffman", "dominant"])
def test_encode_qualities_with_bins(mode):
    rng = np.random.default_rng(2)
    data = bytes(rng.integers(0x21, 0x7F, 2000).astype(np.uint8))
    seg = encode_qualities(data, mode, n_bins=8)
    assert seg.fields[BINS_FIELD].data[0] == 8
    out = decode_qualities(seg)
    assert len(set(out)) <= 8
    assert out == apply_quantizer(QuantizerSpec.from_bytes(seg.fields[BINS_FIELD].data), data)
    assert decode_qualities(encode_qualities(data, mode)) == data
