"""Two-universal hashing by random binary matrices over GF(2).

A seed is an l x n bit matrix ``M``; a raw block ``x`` of n bits hashes to
``y = M x mod 2``.  Choosing ``M`` uniformly at random from all l x n
matrices gives a two-universal family: for x != x' the collision
probability is exactly 2^-l.

Bit order is LSB-first everywhere: bit ``k`` of a packed stream is bit
``k % 8`` of byte ``k // 8``.  Matrix rows are packed into little-endian
64-bit words, so a row's word array viewed as bytes is its LSB-first byte
string.  Rows whose length is not a multiple of 64 are zero-padded inside
the last word, which leaves every parity unchanged.

Seed file layout::

    b"TUH1" | n: u32 LE | l: u32 LE | ceil(l*n/8) bytes of rows, row-major
"""

from __future__ import annotations

import hashlib
import io
import math
import os
import struct
from dataclasses import dataclass
from typing import BinaryIO, Callable, Union

import numpy as np

from truerand.errors import (
    DomainError,
    InsufficientEntropyError,
    SeedFormatError,
    SourceExhaustedError,
    StreamReadError,
)
from truerand.probcore import binary_entropy

MAGIC = b"TUH1"
HEADER = struct.Struct("<4sII")

_M1 = np.uint64(0x1111111111111111)
_ONE = np.uint64(1)

EntropySource = Union[bytes, bytearray, memoryview, BinaryIO, Callable[[int], bytes]]


def _words_per_row(n: int) -> int:
    return (n + 63) // 64


def pack_bits(bits) -> bytes:
    """LSB-first packing of a 0/1 sequence; the last byte is zero-padded."""
    return np.packbits(np.asarray(bits, dtype=np.uint8), bitorder="little").tobytes()


def unpack_bits(data: bytes, length: int) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(bytes(data), dtype=np.uint8), bitorder="little")
    if len(bits) < length:
        raise DomainError(f"need {length} bits, got {len(bits)}")
    return bits[:length]


def _rows_to_words(bit_rows: np.ndarray) -> np.ndarray:
    """(rows, n) 0/1 matrix -> (rows, ceil(n/64)) uint64 words."""
    rows, n = bit_rows.shape
    w = _words_per_row(n)
    padded = np.zeros((rows, w * 64), dtype=np.uint8)
    padded[:, :n] = bit_rows
    packed = np.packbits(padded, axis=1, bitorder="little")
    return packed.view("<u8").astype(np.uint64).reshape(rows, w)


def _words_to_rows(words: np.ndarray, n: int) -> np.ndarray:
    raw = np.ascontiguousarray(words.astype("<u8")).view(np.uint8)
    return np.unpackbits(raw, axis=1, bitorder="little")[:, :n]


@dataclass(frozen=True)
class BitBlock:
    """Packed bit vector (LSB-first) of a given length with zero pad bits."""

    data: bytes
    length: int

    def __post_init__(self):
        data = bytes(self.data)
        if len(data) != (self.length + 7) // 8:
            raise DomainError(f"{len(data)} bytes cannot hold exactly {self.length} bits")
        if self.length % 8 and data[-1] >> (self.length % 8):
            raise DomainError("pad bits beyond the block length must be zero")
        object.__setattr__(self, "data", data)

    @classmethod
    def from_bits(cls, bits) -> BitBlock:
        bits = np.asarray(bits, dtype=np.uint8)
        return cls(pack_bits(bits), len(bits))

    def bits(self) -> np.ndarray:
        return unpack_bits(self.data, self.length)


@dataclass(frozen=True, eq=False)
class HashSeed:
    """An l x n binary matrix selecting one member of the hash family."""

    n: int
    l: int
    words: np.ndarray  # (l, ceil(n / 64)) uint64

    def __post_init__(self):
        if not 1 <= self.l <= self.n:
            raise DomainError(f"need 1 <= l <= n, got n={self.n}, l={self.l}")
        words = np.array(self.words, dtype=np.uint64)
        if words.shape != (self.l, _words_per_row(self.n)):
            raise DomainError(f"matrix words have shape {words.shape}")
        if self.n % 64 and np.any(words[:, -1] >> np.uint64(self.n % 64)):
            raise DomainError("pad bits beyond n must be zero")
        words.setflags(write=False)
        object.__setattr__(self, "words", words)

    @classmethod
    def from_matrix(cls, matrix) -> HashSeed:
        m = np.asarray(matrix, dtype=np.uint8)
        if m.ndim != 2 or np.any(m > 1):
            raise DomainError("matrix must be a 2-d array of bits")
        return cls(m.shape[1], m.shape[0], _rows_to_words(m))

    @classmethod
    def from_bytes(cls, n: int, l: int, payload: bytes) -> HashSeed:
        """Matrix from the row-major LSB-first packing of its l*n bits."""
        if not 1 <= l <= n:
            raise DomainError(f"need 1 <= l <= n, got n={n}, l={l}")
        bits = unpack_bits(payload, l * n)
        return cls.from_matrix(bits.reshape(l, n))

    def matrix(self) -> np.ndarray:
        return _words_to_rows(self.words, self.n)

    def to_bytes(self) -> bytes:
        return pack_bits(self.matrix().ravel())

    def truncate(self, l: int) -> HashSeed:
        """Seed made of the first ``l`` rows (still uniform if the seed was)."""
        return HashSeed(self.n, l, self.words[:l])


class SystemEntropy:
    """Operating-system randomness as a readable source."""

    def read(self, size: int) -> bytes:
        return os.urandom(size)


def _read_source(source: EntropySource, size: int) -> bytes:
    if isinstance(source, (bytes, bytearray, memoryview)):
        data = bytes(source[:size])
    elif hasattr(source, "read"):
        data = source.read(size)
    else:
        data = source(size)
    if len(data) < size:
        raise SourceExhaustedError(
            f"entropy source delivered {8 * len(data)} bits, {8 * size} needed"
        )
    return bytes(data)


def sample_seed(n: int, l: int, entropy_source: EntropySource) -> HashSeed:
    """Draw the l*n matrix bits from ``entropy_source`` (row-major, LSB-first).

    The source must be independent of the device whose output is hashed.
    """
    if not 1 <= l <= n:
        raise DomainError(f"need 1 <= l <= n, got n={n}, l={l}")
    payload = _read_source(entropy_source, (l * n + 7) // 8)
    return HashSeed.from_bytes(n, l, payload)


def _parity(words: np.ndarray) -> np.ndarray:
    """Bit parity of each uint64 by shift folding and a multiply."""
    p = words ^ (words >> _ONE)
    p ^= p >> np.uint64(2)
    p = (p & _M1) * _M1  # wraps mod 2^64
    return (p >> np.uint64(60)) & _ONE


def _hash_words(seed_words: np.ndarray, x_words: np.ndarray) -> np.ndarray:
    """Output bits for a batch of packed inputs.

    ``x_words`` has shape (k, w); the result has shape (k, l) with 0/1 values.
    """
    acc = x_words[:, None, 0] & seed_words[None, :, 0]
    for j in range(1, seed_words.shape[1]):
        acc ^= x_words[:, None, j] & seed_words[None, :, j]
    return _parity(acc).astype(np.uint8)


def hash_block(seed: HashSeed, x: BitBlock) -> BitBlock:
    if x.length != seed.n:
        raise DomainError(f"block has {x.length} bits, seed expects {seed.n}")
    x_words = _rows_to_words(x.bits()[None, :])
    return BitBlock.from_bits(_hash_words(seed.words, x_words)[0])


@dataclass(frozen=True)
class ExtractionPlan:
    n: int
    l: int
    hmin_per_block: float
    eps_target: float
    eps_hash: float
    k_blocks: int
    eps_seed: float
    eps_total: float
    shannon_per_block: float | None = None
    shannon_bound: float | None = None  # largest l consistent with the Shannon entropy
    consistent: bool = True


def shannon_length_bound(shannon: float, eps: float, tol: float = 1e-12) -> float:
    """Largest l with l <= H + 4 eps log2(l) + 2 h(eps), by fixed-point iteration.

    Any hash output within ``eps`` (L1) of uniform and independent of the
    side information must obey this.
    """
    if not 0 <= eps <= 0.5:
        raise DomainError("eps must lie in [0, 1/2]")
    offset = 2.0 * binary_entropy(eps)
    length = max(1.0, shannon + offset)
    for _ in range(1000):
        nxt = max(1.0, shannon + 4.0 * eps * math.log2(length) + offset)
        if abs(nxt - length) < tol:
            return nxt
        length = nxt
    return length


def plan_extraction(
    hmin_per_block: float,
    n: int,
    eps_target: float,
    k_blocks: int = 1,
    eps_seed: float = 0.0,
    shannon_per_block: float | None = None,
) -> ExtractionPlan:
    """Output length per block so that k blocks stay within ``eps_target``.

    The budget left after ``eps_seed`` is split evenly over the blocks; each
    block then yields l = floor(hmin - 2 log2(1/eps_hash)) bits.  With a
    Shannon entropy given, a plan exceeding the Shannon upper bound (or an
    hmin above the Shannon entropy) is flagged as inconsistent, which points
    to an overstated hmin.
    """
    if not 0.0 < eps_target < 1.0:
        raise DomainError(f"eps_target must lie in (0, 1), got {eps_target}")
    if not 0.0 <= eps_seed < eps_target:
        raise DomainError("eps_seed must lie in [0, eps_target)")
    if k_blocks < 1:
        raise DomainError("k_blocks must be >= 1")
    if n < 1:
        raise DomainError("n must be >= 1")
    if not 0.0 <= hmin_per_block <= n:
        raise DomainError(f"hmin_per_block must lie in [0, n], got {hmin_per_block}")

    eps_hash = (eps_target - eps_seed) / k_blocks
    raw = hmin_per_block - 2.0 * math.log2(1.0 / eps_hash)
    l = min(math.floor(raw), n)
    if l <= 0:
        deficit = 1.0 - raw
        raise InsufficientEntropyError(
            f"insufficient entropy: {hmin_per_block:g} bits per block leave l = "
            f"{raw:.3f}; {deficit:.3f} more bits per block are needed",
            deficit=deficit,
            raw_length=raw,
        )
    eps_total = k_blocks * eps_hash + eps_seed

    bound = None
    consistent = True
    if shannon_per_block is not None:
        # the bound is stated for the full L1 norm, twice the trace distance
        bound = shannon_length_bound(shannon_per_block, min(0.5, 2.0 * eps_hash))
        consistent = l <= bound and hmin_per_block <= shannon_per_block + 1e-9
    return ExtractionPlan(
        n=n,
        l=l,
        hmin_per_block=hmin_per_block,
        eps_target=eps_target,
        eps_hash=eps_hash,
        k_blocks=k_blocks,
        eps_seed=eps_seed,
        eps_total=eps_total,
        shannon_per_block=shannon_per_block,
        shannon_bound=bound,
        consistent=consistent,
    )


@dataclass(frozen=True)
class ExtractionResult:
    output: bytes  # empty when written to a sink
    output_bits: int
    blocks: int
    discarded_bits: int


_BATCH_WORDS = 1 << 21


def extract_stream(
    seed: HashSeed,
    stream: bytes | BinaryIO,
    plan: ExtractionPlan | None = None,
    sink: BinaryIO | None = None,
) -> ExtractionResult:
    """Hash consecutive n-bit blocks of ``stream`` with the same seed.

    Output blocks are concatenated bit by bit.  With a plan, only its first
    ``min(plan.l, seed.l)`` matrix rows are used and exceeding the planned
    block count is an error.  A trailing partial block is discarded, never
    padded.
    """
    if plan is not None:
        if plan.n != seed.n:
            raise DomainError(f"plan is for n={plan.n}, seed has n={seed.n}")
        if plan.l < seed.l:
            seed = seed.truncate(plan.l)
    if isinstance(stream, (bytes, bytearray, memoryview)):
        stream = io.BytesIO(bytes(stream))

    n, l = seed.n, seed.l
    w = _words_per_row(n)
    blocks_per_batch = max(1, _BATCH_WORDS // (l * w))
    # read whole bytes; blocks may straddle byte boundaries
    bits_per_read = blocks_per_batch * n
    pending = np.zeros(0, dtype=np.uint8)
    out_carry = np.zeros(0, dtype=np.uint8)
    out_chunks = []
    blocks = 0
    out_bits = 0
    eof = False
    while not eof:
        try:
            chunk = stream.read(max(1, (bits_per_read - len(pending) + 7) // 8))
        except OSError as exc:
            raise StreamReadError(f"reading block {blocks} failed: {exc}", blocks) from exc
        if not chunk:
            eof = True
        else:
            pending = np.concatenate(
                (pending, np.unpackbits(np.frombuffer(chunk, np.uint8), bitorder="little"))
            )
        k = len(pending) // n
        if k == 0:
            continue
        if plan is not None and blocks + k > plan.k_blocks:
            raise DomainError(
                f"input holds more than the {plan.k_blocks} blocks covered by the plan"
            )
        x_words = _rows_to_words(pending[: k * n].reshape(k, n))
        y = _hash_words(seed.words, x_words).ravel()
        pending = pending[k * n :]
        blocks += k
        out_bits += len(y)
        y = np.concatenate((out_carry, y))
        whole = len(y) // 8 * 8
        packed = pack_bits(y[:whole])
        out_carry = y[whole:]
        if sink is not None:
            sink.write(packed)
        else:
            out_chunks.append(packed)
    if len(out_carry):
        tail = pack_bits(out_carry)
        if sink is not None:
            sink.write(tail)
        else:
            out_chunks.append(tail)
    return ExtractionResult(
        output=b"".join(out_chunks),
        output_bits=out_bits,
        blocks=blocks,
        discarded_bits=int(len(pending)),
    )


# --- seed files ------------------------------------------------------------


def seed_to_file_bytes(seed: HashSeed) -> bytes:
    return HEADER.pack(MAGIC, seed.n, seed.l) + seed.to_bytes()


def seed_from_file_bytes(data: bytes) -> HashSeed:
    if len(data) < HEADER.size:
        raise SeedFormatError("seed file shorter than its header")
    magic, n, l = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise SeedFormatError(f"bad magic {magic!r}")
    if not 1 <= l <= n:
        raise SeedFormatError(f"invalid sizes n={n}, l={l}")
    payload = data[HEADER.size :]
    expected = (l * n + 7) // 8
    if len(payload) != expected:
        raise SeedFormatError(f"payload has {len(payload)} bytes, expected {expected}")
    if (l * n) % 8 and payload[-1] >> ((l * n) % 8):
        raise SeedFormatError("pad bits after the matrix must be zero")
    return HashSeed.from_bytes(n, l, payload)


def write_seed(path, seed: HashSeed) -> str:
    """Write a seed file and return its SHA-256 fingerprint."""
    data = seed_to_file_bytes(seed)
    with open(path, "wb") as fh:
        fh.write(data)
    return hashlib.sha256(data).hexdigest()


def read_seed(path) -> HashSeed:
    with open(path, "rb") as fh:
        return seed_from_file_bytes(fh.read())
