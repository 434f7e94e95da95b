import itertools

import numpy as np
import pytest

from codesmux import (CodeBook, SensorCode, SensorGeometry, cross_correlation,
                      generate_codebook, min_hamming_distance, validate_codebook)


def book_of(*bitstrings, ids=None):
    ids = ids or range(1, len(bitstrings) + 1)
    return CodeBook(tuple(SensorCode.from_string(i, b) for i, b in zip(ids, bitstrings)))


def greedy_oracle(S, L):
    """Max-min Hamming greedy written directly from its definition on integers."""
    cands = list(range(2 ** (L - 1), 2 ** L))        # leading-1 codes, ascending
    chosen = [2 ** L - 1]
    while len(chosen) < S:
        best, best_d = None, -1
        for c in cands:
            if c in chosen:
                continue
            d = min(bin(c ^ x).count("1") for x in chosen)
            if d > best_d:
                best, best_d = c, d
        chosen.append(best)
    return [format(c, f"0{L}b") for c in chosen]


# validate_codebook

def test_generated_book_is_valid():
    assert validate_codebook(generate_codebook(10, 5)).ok


def test_duplicate_code_names_both_ids():
    rep = validate_codebook(book_of("11111", "10011", "10011"))
    dup = [v for v in rep.violations if v.kind == "duplicate code"]
    assert len(dup) == 1 and dup[0].sensor_ids == (2, 3)


def test_leading_zero_flagged():
    rep = validate_codebook(book_of("11111", "01101"))
    assert [v.sensor_ids for v in rep.violations if v.kind == "leading bit is 0"] == [(2,)]


def test_length_and_id_violations():
    rep = validate_codebook(book_of("11111", "1001"))
    assert any(v.kind == "length mismatch" and v.sensor_ids == (2,) for v in rep.violations)
    rep = validate_codebook(book_of("11111", "10011", ids=[1, 3]))
    assert any(v.kind == "non-contiguous ids" for v in rep.violations)
    rep = validate_codebook(book_of("11111", "10011", ids=[1, 1]))
    assert any(v.kind == "duplicate sensor id" for v in rep.violations)
    assert not validate_codebook(CodeBook(())).ok


# generate_codebook

def test_generate_10_by_5():
    book = generate_codebook(10, 5)
    bits = [str(c) for c in book.codes]
    assert len(set(bits)) == 10 and all(b[0] == "1" for b in bits)
    assert book.sensor_ids == list(range(1, 11))


@pytest.mark.parametrize("S,L", [(10, 5), (16, 5), (5, 4), (8, 6), (1, 1), (2, 2)])
def test_generate_matches_greedy_oracle(S, L):
    assert [str(c) for c in generate_codebook(S, L).codes] == greedy_oracle(S, L)


def test_generate_capacity_error():
    with pytest.raises(ValueError, match="capacity"):
        generate_codebook(17, 5)


def test_generate_single_bit():
    book = generate_codebook(1, 1)
    assert [str(c) for c in book.codes] == ["1"]


def test_generate_is_deterministic():
    assert generate_codebook(12, 6) == generate_codebook(12, 6)


def test_generated_books_always_valid():
    for L in range(1, 7):
        for S in range(1, 2 ** (L - 1) + 1):
            assert validate_codebook(generate_codebook(S, L)).ok


# cross_correlation

def corr_oracle(a, b):
    """sum_n a[n] b[n - lag] for lag = -(L-1)..L-1, by direct summation."""
    L = len(a)
    out = []
    for lag in range(-(L - 1), L):
        out.append(sum(a[n] * b[n - lag] for n in range(L) if 0 <= n - lag < L))
    return out


def test_cross_correlation_examples():
    a = SensorCode.from_string(1, "10011")
    b = SensorCode.from_string(2, "11001")
    assert cross_correlation(a, a)[4] == 3
    assert cross_correlation(a, b)[4] == 2
    assert cross_correlation(SensorCode.from_string(1, "10000"), SensorCode.from_string(2, "00001"))[4] == 0


def test_cross_correlation_matches_definition():
    rng = np.random.default_rng(0)
    for _ in range(50):
        a = SensorCode(1, rng.integers(0, 2, 7))
        b = SensorCode(2, rng.integers(0, 2, 7))
        assert list(cross_correlation(a, b)) == corr_oracle(a.bits, b.bits)


def test_cross_correlation_symmetry_and_popcount():
    for a, b in itertools.product(generate_codebook(8, 5).codes, repeat=2):
        assert list(cross_correlation(a, b)) == list(cross_correlation(b, a)[::-1])
        assert cross_correlation(a, a)[a.length - 1] == a.popcount


def test_cross_correlation_length_mismatch():
    with pytest.raises(ValueError):
        cross_correlation(SensorCode.from_string(1, "101"), SensorCode.from_string(2, "1011"))


# min_hamming_distance

def test_min_hamming_examples():
    assert min_hamming_distance(book_of("10011", "11001")) == 2
    assert min_hamming_distance(book_of("10000", "10001")) == 1
    assert min_hamming_distance(generate_codebook(10, 5)) >= 1
    with pytest.raises(ValueError):
        min_hamming_distance(book_of("1"))


# geometry and codes

def test_geometry_defaults_and_validation():
    g = SensorGeometry()
    assert (g.electrode_width_um, g.bit_pitch_um, g.pre_offset_um, g.sensing_zone_um) == (10, 30, 30, 20)
    assert g.bit_distance_um(1) == 30 and g.bit_distance_um(5) == 150
    with pytest.raises(ValueError):
        SensorGeometry(bit_pitch_um=0)


def test_sensor_code_basics():
    c = SensorCode.from_string(3, "10011")
    assert c.positive_bits == [1, 4, 5] and c.popcount == 3 and str(c) == "10011"
    with pytest.raises(ValueError):
        SensorCode(1, (1, 2))
