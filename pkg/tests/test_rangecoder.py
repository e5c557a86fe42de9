import math

import numpy as np
import pytest

from jicd.entropy import (decode_offset, encode_offset, gaussian_bin_probability, gaussian_tables,
                          offset_cost_bits, pmf_to_cdf)
from jicd.rangecoder import (TOTAL, RangeCoderError, RangeDecoder, RangeEncoder, decode_symbols,
                             encode_symbols)


def ideal_bits(symbols, cdfs):
    return sum(-math.log2((c[s + 1] - c[s]) / TOTAL) for s, c in zip(symbols, cdfs))


def test_empty_sequence():
    data = encode_symbols([], [])
    assert 0 < len(data) <= 8
    assert decode_symbols(data, []) == []


def test_uniform_bytes_length():
    rng = np.random.default_rng(0)
    cdf = list(range(0, TOTAL + 1, TOTAL // 256))
    sym = rng.integers(0, 256, 10000)
    data = encode_symbols(sym, [cdf] * len(sym))
    assert 10000 <= len(data) <= 10000 + 64
    assert decode_symbols(data, [cdf] * len(sym)) == sym.tolist()


def random_case(rng):
    n = int(rng.integers(0, 200))
    cdfs, syms = [], []
    for _ in range(n):
        k = int(rng.integers(1, 40))
        pmf = rng.dirichlet(np.full(k, rng.uniform(0.05, 3)))
        pmf = np.maximum(pmf, 1e-15)
        cdf = pmf_to_cdf(pmf)[0].tolist()
        cdfs.append(cdf)
        syms.append(int(rng.choice(k, p=pmf / pmf.sum())))
    return syms, cdfs


def test_round_trip_random_cases():
    rng = np.random.default_rng(42)
    for _ in range(1000):
        syms, cdfs = random_case(rng)
        data = encode_symbols(syms, cdfs)
        assert decode_symbols(data, cdfs) == syms
        bits = 8 * len(data)
        ideal = ideal_bits(syms, cdfs)
        assert ideal - 1e-6 <= bits <= ideal + 8 * (32 + 1e-2 * len(syms))


def test_symbol_outside_support():
    with pytest.raises(RangeCoderError):
        encode_symbols([3], [[0, TOTAL // 2, TOTAL]])


def test_truncated_stream_reports_position():
    cdf = list(range(0, TOTAL + 1, TOTAL // 256))
    data = encode_symbols(list(range(200)), [cdf] * 200)
    with pytest.raises(RangeCoderError, match="truncated.*byte"):
        decode_symbols(data[:50], [cdf] * 200)


def test_bypass_bits_round_trip():
    enc = RangeEncoder()
    enc.encode_bits(0b1011001, 7)
    enc.encode_bits(5, 3)
    dec = RangeDecoder(enc.finish())
    assert dec.decode_bits(7) == 0b1011001 and dec.decode_bits(3) == 5


def test_escape_offsets_round_trip():
    sigma = np.array([0.11, 1.0, 4.0, 0.5, 2.0])
    tables, half = gaussian_tables(sigma)
    values = [0, -3, 40, -1000, 123456]
    enc = RangeEncoder()
    cost = 0.0
    for v, t, h in zip(values, tables, half):
        encode_offset(enc, v, t, int(h))
        cost += offset_cost_bits(v, t, int(h))
    data = enc.finish()
    dec = RangeDecoder(data)
    assert [decode_offset(dec, t, int(h)) for t, h in zip(tables, half)] == values
    assert cost - 1e-6 <= 8 * len(data) <= cost + 8 * 32


def test_gaussian_coding_cost_close_to_model():
    rng = np.random.default_rng(3)
    sigma = rng.uniform(0.11, 30, 20000)
    sym = np.round(rng.standard_normal(sigma.size) * sigma).astype(int)
    tables, half = gaussian_tables(sigma)
    enc = RangeEncoder()
    for v, t, h in zip(sym, tables, half):
        encode_offset(enc, int(v), t, int(h))
    bits = 8 * len(enc.finish())
    model = float(-np.log2(gaussian_bin_probability(sym, 0, sigma)).sum())
    assert bits <= model + 8 * (32 + 1e-2 * sym.size)
