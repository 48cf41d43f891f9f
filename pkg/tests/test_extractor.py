import hashlib
import io
import itertools
import math
import struct
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from truerand.errors import (
    DomainError,
    InsufficientEntropyError,
    SeedFormatError,
    SourceExhaustedError,
    StreamReadError,
)
from truerand.extractor import (
    BitBlock,
    HashSeed,
    extract_stream,
    hash_block,
    pack_bits,
    plan_extraction,
    read_seed,
    sample_seed,
    seed_from_file_bytes,
    seed_to_file_bytes,
    shannon_length_bound,
    unpack_bits,
    write_seed,
)

import oracles

RECORDED_SEED_FILE = bytes.fromhex("545548314000000008000000") + bytes(range(64))
RECORDED_SEED_SHA = "2b700ba1fa1c41c00df87f61958aaeb33c1f74773cae776dc605ce9e860b2eb1"
RECORDED_STREAM_SHA = "2283f1438240e6b8e3783559cad8fe240d5e61d8b22b88eacbd4d46e0b698a0c"


def _random_seed(rng, n, l):
    return HashSeed.from_matrix(rng.integers(0, 2, (l, n)))


# --- bit packing -----------------------------------------------------------


def test_bits_are_lsb_first():
    assert pack_bits([1, 0, 0, 0, 0, 0, 0, 0, 1]) == b"\x01\x01"
    assert unpack_bits(b"\x05", 3).tolist() == [1, 0, 1]
    with pytest.raises(DomainError):
        unpack_bits(b"\x05", 9)


def test_bitblock_rejects_dirty_padding():
    assert BitBlock(b"\x07", 3).bits().tolist() == [1, 1, 1]
    with pytest.raises(DomainError):
        BitBlock(b"\x0f", 3)
    with pytest.raises(DomainError):
        BitBlock(b"\x00\x00", 3)


# --- kernel ----------------------------------------------------------------


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 200).flatmap(lambda n: st.tuples(st.just(n), st.integers(1, n), st.integers(0, 2**32))))
def test_kernel_matches_naive_oracle(args):
    n, l, s = args
    rng = np.random.default_rng(s)
    m = rng.integers(0, 2, (l, n))
    x = rng.integers(0, 2, n)
    got = hash_block(HashSeed.from_matrix(m), BitBlock.from_bits(x)).bits().tolist()
    assert got == oracles.naive_hash_loop(m, x)


def test_kernel_is_linear():
    rng = np.random.default_rng(1)
    seed = _random_seed(rng, 130, 70)
    for _ in range(50):
        x, y = rng.integers(0, 2, (2, 130))
        hx = hash_block(seed, BitBlock.from_bits(x)).bits()
        hy = hash_block(seed, BitBlock.from_bits(y)).bits()
        hxy = hash_block(seed, BitBlock.from_bits(x ^ y)).bits()
        np.testing.assert_array_equal(hx ^ hy, hxy)


def test_hash_block_checks_length():
    seed = _random_seed(np.random.default_rng(0), 16, 4)
    with pytest.raises(DomainError):
        hash_block(seed, BitBlock.from_bits([0] * 15))


def test_collision_probability_is_exact():
    # all 2^8 matrices of shape 2 x 4
    n, l = 4, 2
    rows = range(2**n)
    for x, x2 in itertools.combinations(range(2**n), 2):
        collisions = sum(
            all((bin(r & x).count("1") & 1) == (bin(r & x2).count("1") & 1) for r in mat)
            for mat in itertools.product(rows, repeat=l)
        )
        assert Fraction(collisions, 2 ** (l * n)) == Fraction(1, 2**l)


@pytest.mark.parametrize(
    "p_xc",
    [
        # c = 0: uniform over strings with a zero low bit; c = 1: uniform
        {**{(x, 0): Fraction(1, 16) for x in range(0, 16, 2)}, **{(x, 1): Fraction(1, 32) for x in range(16)}},
        # skewed, one side-information value
        {(x, 0): Fraction(x + 1, 136) for x in range(16)},
    ],
)
@pytest.mark.parametrize("l", [1, 2])
def test_leftover_hash_bound_exact(p_xc, l):
    by_c = {}
    for (x, c), p in p_xc.items():
        by_c[c] = max(by_c.get(c, 0), p)
    hmin = -math.log2(sum(by_c.values()))
    assert oracles.hashed_distance(p_xc, 4, l) <= 2 ** (-(hmin - l) / 2)


# --- seeds -----------------------------------------------------------------


def test_seed_file_round_trip(tmp_path):
    seed = _random_seed(np.random.default_rng(3), 100, 37)
    path = tmp_path / "seed.bin"
    fingerprint = write_seed(path, seed)
    assert fingerprint == hashlib.sha256(path.read_bytes()).hexdigest()
    back = read_seed(path)
    assert (back.n, back.l) == (100, 37)
    np.testing.assert_array_equal(back.matrix(), seed.matrix())
    assert len(path.read_bytes()) == 12 + math.ceil(37 * 100 / 8)


def test_recorded_seed_vector():
    seed = sample_seed(64, 8, bytes(range(64)))
    data = seed_to_file_bytes(seed)
    assert data == RECORDED_SEED_FILE
    assert hashlib.sha256(data).hexdigest() == RECORDED_SEED_SHA
    # row 0 is bytes 0..7, little-endian bit order
    assert seed.matrix()[0, 8:16].tolist() == [1, 0, 0, 0, 0, 0, 0, 0]


def test_zero_source_gives_zero_matrix():
    seed = sample_seed(64, 64, bytes(512))
    assert not seed.matrix().any()


def test_seed_sources():
    assert sample_seed(8, 2, io.BytesIO(b"\xff\x00")).matrix().tolist() == [[1] * 8, [0] * 8]
    assert sample_seed(8, 1, lambda k: b"\x01" * k).matrix()[0].tolist() == [1] + [0] * 7
    with pytest.raises(SourceExhaustedError):
        sample_seed(64, 64, bytes(511))
    with pytest.raises(DomainError):
        sample_seed(4, 5, bytes(10))


@pytest.mark.parametrize(
    "data",
    [
        b"",
        b"TUH1\x08\x00",
        b"TUH2" + struct.pack("<II", 8, 1) + b"\x00",
        b"TUH1" + struct.pack("<II", 8, 9) + b"\x00" * 9,
        b"TUH1" + struct.pack("<II", 8, 0),
        b"TUH1" + struct.pack("<II", 8, 1),
        b"TUH1" + struct.pack("<II", 8, 1) + b"\x00\x00",
        b"TUH1" + struct.pack("<II", 3, 1) + b"\x08",
    ],
)
def test_malformed_seed_files(data):
    with pytest.raises(SeedFormatError):
        seed_from_file_bytes(data)


def test_truncated_seed_keeps_leading_rows():
    seed = _random_seed(np.random.default_rng(4), 70, 20)
    np.testing.assert_array_equal(seed.truncate(5).matrix(), seed.matrix()[:5])


# --- streams ---------------------------------------------------------------


def test_stream_matches_blockwise_oracle():
    rng = np.random.default_rng(5)
    seed = _random_seed(rng, 96, 40)
    data = rng.bytes(1000)
    bits = unpack_bits(data, 8000)
    m = seed.matrix()
    expected = []
    for b in range(8000 // 96):
        expected += oracles.naive_hash(m, bits[96 * b : 96 * (b + 1)])
    result = extract_stream(seed, data)
    assert result.blocks == 83
    assert result.discarded_bits == 8000 - 83 * 96
    assert result.output_bits == 83 * 40
    assert result.output == pack_bits(expected)


def test_recorded_stream_vector():
    rng = np.random.default_rng(2024)
    seed = sample_seed(96, 40, rng.bytes(480))
    data = rng.bytes(1000)
    out = extract_stream(seed, data)
    bits = unpack_bits(data, 8000)
    naive = []
    for b in range(out.blocks):
        naive += oracles.naive_hash(seed.matrix(), bits[96 * b : 96 * (b + 1)])
    assert out.output == pack_bits(naive)
    assert hashlib.sha256(out.output).hexdigest() == RECORDED_STREAM_SHA


def test_stream_sink_and_chunking_agree():
    rng = np.random.default_rng(6)
    seed = _random_seed(rng, 64, 64)
    data = rng.bytes(8 * 1000 + 3)
    direct = extract_stream(seed, data)
    sink = io.BytesIO()
    via_sink = extract_stream(seed, io.BytesIO(data), sink=sink)
    assert sink.getvalue() == direct.output
    assert via_sink.output == b""
    assert via_sink.blocks == direct.blocks == 1000
    assert via_sink.discarded_bits == 24


def test_empty_stream():
    seed = _random_seed(np.random.default_rng(0), 64, 8)
    r = extract_stream(seed, b"")
    assert (r.output, r.blocks, r.output_bits, r.discarded_bits) == (b"", 0, 0, 0)


def test_plan_limits_rows_and_blocks():
    rng = np.random.default_rng(7)
    seed = _random_seed(rng, 128, 100)
    plan = plan_extraction(100, 128, 2**-20, k_blocks=4)
    data = rng.bytes(16 * 4)
    r = extract_stream(seed, data, plan)
    assert r.output_bits == 4 * plan.l
    short = extract_stream(seed.truncate(plan.l), data)
    assert r.output == short.output
    with pytest.raises(DomainError):
        extract_stream(seed, rng.bytes(16 * 5), plan)
    with pytest.raises(DomainError):
        extract_stream(_random_seed(rng, 64, 8), data, plan)


class _Failing(io.RawIOBase):
    def __init__(self, good: bytes):
        self.good = good

    def read(self, size=-1):
        if self.good:
            chunk, self.good = self.good, b""
            return chunk
        raise OSError("device unplugged")


def test_stream_read_failure_reports_block():
    seed = _random_seed(np.random.default_rng(8), 64, 8)
    with pytest.raises(StreamReadError) as info:
        extract_stream(seed, _Failing(bytes(8 * 3)))
    assert info.value.block_index == 3


# --- planning --------------------------------------------------------------


def test_plan_single_block():
    plan = plan_extraction(100, 128, 2**-20)
    assert plan.l == 60
    assert plan.eps_hash == 2**-20
    assert plan.eps_total == 2**-20


def test_plan_budget_arithmetic():
    plan = plan_extraction(900, 1024, 1e-6, k_blocks=1000, eps_seed=1e-7)
    assert plan.eps_hash == (1e-6 - 1e-7) / 1000
    assert plan.eps_total == 1000 * plan.eps_hash + 1e-7
    assert plan.l == math.floor(900 - 2 * math.log2(1 / plan.eps_hash))


def test_plan_refuses_negative_length():
    with pytest.raises(InsufficientEntropyError) as info:
        plan_extraction(10, 64, 1e-6)
    raw = 10 - 2 * math.log2(1e6)
    assert info.value.raw_length == pytest.approx(raw)
    assert info.value.deficit == pytest.approx(1 - raw)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(eps_target=0.0),
        dict(eps_target=1.0),
        dict(eps_seed=2e-6),
        dict(k_blocks=0),
        dict(hmin_per_block=65),
        dict(hmin_per_block=-1),
    ],
)
def test_plan_validation(kwargs):
    args = dict(hmin_per_block=60, n=64, eps_target=1e-6) | kwargs
    with pytest.raises(DomainError):
        plan_extraction(**args)


def test_shannon_bound_flags_inflated_hmin():
    honest = plan_extraction(400, 1024, 1e-6, shannon_per_block=600)
    assert honest.consistent
    assert honest.l <= honest.shannon_bound
    inflated = plan_extraction(700, 1024, 1e-6, shannon_per_block=600)
    assert not inflated.consistent


def test_shannon_bound_fixed_point():
    for h, eps in [(10.0, 0.01), (500.0, 1e-6), (0.0, 0.1)]:
        l = shannon_length_bound(h, eps)
        h2 = -eps * math.log2(eps) - (1 - eps) * math.log2(1 - eps)
        assert l == pytest.approx(max(1.0, h + 4 * eps * math.log2(l) + 2 * h2), abs=1e-9)
        assert l >= h
