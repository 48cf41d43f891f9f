"""Monte Carlo simulation of the beam-splitter QRNG, pulse by pulse.

Each pulse draws a photon number, one path bit per photon (1 = v, 0 = h),
a firing threshold per detector and a photon-independent click bit per
detector, then maps them to the output bits with :func:`chi`.  Every sampled
variable is kept, so the records double as an oracle for the closed-form
models: an adversary told any subset of the side information can be
simulated directly.

The generator here is a test instrument.  Its output is pseudorandom and
must never be fed to the extractor as if it came from a physical device.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import BinaryIO, Iterable, Iterator, Sequence

import numpy as np

from truerand.errors import DomainError
from truerand.models import DetailedModelParams, SimpleModelParams, solve_px

CHUNK = 1 << 20
SIDE_INFO_FIELDS = ("n", "r_v", "r_h", "s_v", "s_h")
SIDE_INFO_RECORD = np.dtype(
    [
        ("n", "<u4"),
        ("r_v", "<u4"),
        ("r_h", "<u4"),
        ("s_v", "u1"),
        ("s_h", "u1"),
        ("x_v", "u1"),
        ("x_h", "u1"),
    ]
)


def chi(paths: Sequence, n: int, r_v: int, r_h: int, s_v: int, s_h: int) -> tuple[int, int]:
    """Output bits (x_v, x_h) from photon paths, thresholds and noise clicks.

    A detector fires if its noise bit is set or at least its threshold of
    photons took its path.  Paths may be given as 1/0 or "v"/"h".
    """
    if len(paths) != n:
        raise DomainError(f"expected {n} path entries, got {len(paths)}")
    if r_v < 1 or r_h < 1:
        raise DomainError("thresholds must be >= 1")
    to_v = sum(1 for q in paths if q in (1, "v"))
    x_v = int(s_v == 1 or to_v >= r_v)
    x_h = int(s_h == 1 or (n - to_v) >= r_h)
    return x_v, x_h


@dataclass(frozen=True)
class PulseRecord:
    """One simulated pulse.

    Thresholds above ``n`` mean the photons cannot make that detector fire;
    the simulator writes them as ``n + 1``.
    """

    n: int
    paths: tuple[int, ...]
    r_v: int
    r_h: int
    s_v: int
    s_h: int
    x_v: int
    x_h: int

    def consistent(self) -> bool:
        return chi(self.paths, self.n, self.r_v, self.r_h, self.s_v, self.s_h) == (
            self.x_v,
            self.x_h,
        )


@dataclass
class PulseBatch:
    """Column-oriented block of pulses.

    ``paths[offsets[i]:offsets[i + 1]]`` are the path bits of pulse ``i``.
    """

    n: np.ndarray
    r_v: np.ndarray
    r_h: np.ndarray
    s_v: np.ndarray
    s_h: np.ndarray
    x_v: np.ndarray
    x_h: np.ndarray
    paths: np.ndarray | None = None
    offsets: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.n)

    @property
    def outcome(self) -> np.ndarray:
        """Outcome index 2 x_v + x_h, i.e. position in ("00", "01", "10", "11")."""
        return 2 * self.x_v.astype(np.int64) + self.x_h

    def records(self) -> Iterator[PulseRecord]:
        for i in range(len(self)):
            if self.paths is not None:
                paths = tuple(int(b) for b in self.paths[self.offsets[i] : self.offsets[i + 1]])
            else:
                paths = ()
            yield PulseRecord(
                int(self.n[i]),
                paths,
                int(self.r_v[i]),
                int(self.r_h[i]),
                int(self.s_v[i]),
                int(self.s_h[i]),
                int(self.x_v[i]),
                int(self.x_h[i]),
            )

    @classmethod
    def from_records(cls, records: Iterable[PulseRecord]) -> PulseBatch:
        records = list(records)
        cols = {
            f: np.array([getattr(r, f) for r in records], dtype=np.int64)
            for f in ("n", "r_v", "r_h", "s_v", "s_h", "x_v", "x_h")
        }
        paths = np.array([b for r in records for b in r.paths], dtype=np.uint8)
        offsets = np.concatenate(([0], np.cumsum(cols["n"]))).astype(np.int64)
        return cls(**cols, paths=paths, offsets=offsets)

    def side_info_records(self) -> np.ndarray:
        out = np.empty(len(self), dtype=SIDE_INFO_RECORD)
        for f in SIDE_INFO_RECORD.names:
            out[f] = getattr(self, f)
        return out


@dataclass(frozen=True)
class SimulationConfig:
    params: SimpleModelParams | DetailedModelParams
    pulse_count: int
    rng_seed: int = 0
    noise_mode: str = "stationary"

    def __post_init__(self):
        if self.pulse_count < 0:
            raise DomainError("pulse_count must be >= 0")
        if self.noise_mode not in ("stationary", "mechanistic"):
            raise DomainError(f"unknown noise_mode {self.noise_mode!r}")
        if not 0 <= self.rng_seed < 2**64:
            raise DomainError("rng_seed must be a 64-bit unsigned integer")


def _sample_photons(rng_n, rng_paths, alpha2: float, k: int):
    n = rng_n.poisson(alpha2, k).astype(np.int64)
    offsets = np.concatenate(([0], np.cumsum(n)))
    paths = rng_paths.integers(0, 2, int(offsets[-1]), dtype=np.uint8)
    cum = np.concatenate(([0], np.cumsum(paths, dtype=np.int64)))
    to_v = cum[offsets[1:]] - cum[offsets[:-1]]
    return n, paths, offsets, to_v


def _geometric_thresholds(rng: np.random.Generator, mu: float, n: np.ndarray) -> np.ndarray:
    if mu == 0.0:
        return n + 1
    return np.minimum(rng.geometric(mu, len(n)), n + 1)


def _mechanistic_clicks(rngs, params: DetailedModelParams, photon_v, photon_h, state):
    """Sequential noise clicks driven by the previous pulse's outputs.

    ``rngs`` supplies six generators (dark, afterpulse and crosstalk draws
    for each detector).  ``state`` holds the previous (x_v, x_h) and is
    updated in place.  It starts as (False, False), so on the first pulse
    only dark counts fire.
    """
    k = len(photon_v)
    probs = (params.p_dark, params.p_dark, params.gamma, params.gamma, params.delta, params.delta)
    dark_v, dark_h, after_v, after_h, cross_v, cross_h = (
        (g.random(k) < p).tolist() for g, p in zip(rngs, probs)
    )
    pv, ph = photon_v.tolist(), photon_h.tolist()
    s_v, s_h = [0] * k, [0] * k
    prev_v, prev_h = state
    for i in range(k):
        sv = dark_v[i] or (prev_v and after_v[i]) or (prev_h and cross_v[i])
        sh = dark_h[i] or (prev_h and after_h[i]) or (prev_v and cross_h[i])
        s_v[i], s_h[i] = bool(sv), bool(sh)
        prev_v, prev_h = bool(sv or pv[i]), bool(sh or ph[i])
    state[:] = [prev_v, prev_h]
    return np.array(s_v, dtype=bool), np.array(s_h, dtype=bool)


# photon numbers, paths, two thresholds, six noise draws
_STREAMS = 10


def simulate_batches(config: SimulationConfig) -> Iterator[PulseBatch]:
    """Deterministic stream of pulse batches (at most ``CHUNK`` pulses each).

    Every chunk and every random field within it has its own generator, so
    a run is a prefix of any longer run with the same seed.
    """
    params = config.params
    detailed = isinstance(params, DetailedModelParams)
    p_s = solve_px(params).p_s if detailed else 0.0
    seeds = np.random.SeedSequence(config.rng_seed)
    state = [False, False]
    remaining = config.pulse_count
    while remaining > 0:
        k = min(CHUNK, remaining)
        remaining -= k
        rngs = [np.random.default_rng(s) for s in seeds.spawn(1)[0].spawn(_STREAMS)]
        n, paths, offsets, to_v = _sample_photons(rngs[0], rngs[1], params.alpha2, k)
        if detailed:
            r_v = _geometric_thresholds(rngs[2], params.mu, n)
            r_h = _geometric_thresholds(rngs[3], params.mu, n)
        else:
            r_v = np.where(rngs[2].random(k) < params.mu, 1, n + 1)
            r_h = np.where(rngs[3].random(k) < params.mu, 1, n + 1)
        photon_v = to_v >= r_v
        photon_h = (n - to_v) >= r_h
        if not detailed:
            s_v = s_h = np.zeros(k, dtype=bool)
        elif config.noise_mode == "stationary":
            s_v = rngs[4].random(k) < p_s
            s_h = rngs[5].random(k) < p_s
        else:
            s_v, s_h = _mechanistic_clicks(rngs[4:], params, photon_v, photon_h, state)
        yield PulseBatch(
            n=n,
            r_v=r_v.astype(np.int64),
            r_h=r_h.astype(np.int64),
            s_v=s_v.astype(np.uint8),
            s_h=s_h.astype(np.uint8),
            x_v=(s_v | photon_v).astype(np.uint8),
            x_h=(s_h | photon_h).astype(np.uint8),
            paths=paths,
            offsets=offsets,
        )


def simulate(config: SimulationConfig) -> Iterator[PulseRecord]:
    for batch in simulate_batches(config):
        yield from batch.records()


def detector_toy_batch(mu: float, pulses: int, rng_seed: int = 0) -> PulseBatch:
    """Single photon, single detector of efficiency ``mu`` on the v path.

    The h side has no detector (threshold 2 > n).  Knowing whether the
    detector is sensitive (``r_v`` is 1 or 2) leaves a uniform bit only when
    it is.
    """
    if not 0.0 <= mu <= 1.0:
        raise DomainError("mu must lie in [0, 1]")
    rng = np.random.Generator(np.random.PCG64(rng_seed))
    paths = rng.integers(0, 2, pulses, dtype=np.uint8)
    r_v = np.where(rng.random(pulses) < mu, 1, 2)
    ones = np.ones(pulses, dtype=np.int64)
    zeros = np.zeros(pulses, dtype=np.uint8)
    return PulseBatch(
        n=ones,
        r_v=r_v,
        r_h=2 * ones,
        s_v=zeros,
        s_h=zeros,
        x_v=(paths >= r_v).astype(np.uint8),
        x_h=zeros.copy(),
        paths=paths,
        offsets=np.arange(pulses + 1, dtype=np.int64),
    )


@dataclass(frozen=True)
class GuessEstimate:
    probability: float
    stderr: float
    samples: int

    @property
    def min_entropy(self) -> float:
        return float(-np.log2(self.probability))


_KEY_BITS = {"n": 16, "r_v": 16, "r_h": 16, "s_v": 1, "s_h": 1}


def _side_info_key(batch: PulseBatch, fields: Sequence[str]) -> np.ndarray:
    key = np.zeros(len(batch), dtype=np.int64)
    for f in fields:
        col = getattr(batch, f).astype(np.int64)
        width = _KEY_BITS[f]
        if col.size and col.max() >= 1 << width:
            raise DomainError(f"side-information field {f} does not fit in {width} bits")
        key = (key << width) | col
    return key


def empirical_guessing_probability(
    stream: PulseBatch | Iterable[PulseBatch] | Iterable[PulseRecord],
    side_info_fields: Sequence[str] = (),
    cross_fit: bool = False,
) -> GuessEstimate:
    """Success rate of guessing the most frequent outcome for each observed
    side-information value.

    Returns the frequency with its binomial standard error; -log2 of it
    estimates the conditional min-entropy given ``side_info_fields``.

    The plain estimate picks and scores the guess on the same pulses, which
    biases it upward wherever outcomes tie.  With ``cross_fit`` the guess is
    learned on the even-indexed pulses and scored on the odd ones, and vice
    versa.
    """
    fields = tuple(side_info_fields)
    unknown = set(fields) - set(SIDE_INFO_FIELDS)
    if unknown:
        raise DomainError(f"unknown side-information fields {sorted(unknown)}")
    if len(set(fields)) != len(fields):
        raise DomainError("side-information fields repeat")
    if isinstance(stream, PulseBatch):
        stream = [stream]

    codes, counts = [], []
    pending = []
    seen = 0

    def absorb(batch):
        nonlocal seen
        fold = (np.arange(seen, seen + len(batch)) & 1) << 2
        seen += len(batch)
        c = (_side_info_key(batch, fields) << 3) | fold | batch.outcome
        u, k = np.unique(c, return_counts=True)
        codes.append(u)
        counts.append(k)

    for item in stream:
        if isinstance(item, PulseRecord):
            pending.append(item)
        else:
            absorb(item)
    if pending:
        absorb(PulseBatch.from_records(pending))

    if seen == 0:
        raise DomainError("stream is empty")
    all_codes = np.concatenate(codes)
    uniq, inverse = np.unique(all_codes, return_inverse=True)
    weights = np.bincount(inverse, weights=np.concatenate(counts).astype(float))
    keys, key_index = np.unique(uniq >> 3, return_inverse=True)
    table = np.zeros((len(keys), 2, 4))
    table[key_index, (uniq >> 2) & 1, uniq & 3] = weights
    if cross_fit:
        rows = np.arange(len(keys))
        guess_even = table[:, 0].argmax(axis=1)
        guess_odd = table[:, 1].argmax(axis=1)
        hits = table[rows, 1, guess_even].sum() + table[rows, 0, guess_odd].sum()
    else:
        hits = table.sum(axis=1).max(axis=1).sum()
    p = float(hits) / seen
    return GuessEstimate(p, float(np.sqrt(p * (1 - p) / seen)), seen)


# --- file formats ----------------------------------------------------------


class _BitWriter:
    """Packs a bit stream LSB-first into bytes across arbitrary chunks."""

    def __init__(self, out: BinaryIO):
        self.out = out
        self.carry = np.zeros(0, dtype=np.uint8)

    def write(self, bits: np.ndarray) -> None:
        bits = np.concatenate((self.carry, bits.astype(np.uint8)))
        whole = len(bits) // 8 * 8
        self.out.write(np.packbits(bits[:whole], bitorder="little").tobytes())
        self.carry = bits[whole:]

    def close(self) -> None:
        if len(self.carry):
            self.out.write(np.packbits(self.carry, bitorder="little").tobytes())
            self.carry = self.carry[:0]


def write_outputs(
    batches: Iterable[PulseBatch],
    raw_out: BinaryIO | None = None,
    side_out: BinaryIO | None = None,
) -> np.ndarray:
    """Write raw bits (x_v, x_h interleaved) and fixed-width side-info records.

    Returns outcome counts in order 00, 01, 10, 11.
    """
    writer = _BitWriter(raw_out) if raw_out is not None else None
    counts = np.zeros(4, dtype=np.int64)
    for batch in batches:
        counts += np.bincount(batch.outcome, minlength=4)
        if writer is not None:
            writer.write(np.stack((batch.x_v, batch.x_h), axis=1).ravel())
        if side_out is not None:
            side_out.write(batch.side_info_records().tobytes())
    if writer is not None:
        writer.close()
    return counts


def read_side_info(data: bytes) -> PulseBatch:
    """Parse side-info records back into a batch (without photon paths)."""
    if len(data) % SIDE_INFO_RECORD.itemsize:
        raise DomainError(
            f"side-info data length {len(data)} is not a multiple of "
            f"{SIDE_INFO_RECORD.itemsize}"
        )
    rec = np.frombuffer(data, dtype=SIDE_INFO_RECORD)
    return PulseBatch(**{f: rec[f].astype(np.int64) for f in SIDE_INFO_RECORD.names})


def read_raw_bits(data: bytes, pulses: int) -> tuple[np.ndarray, np.ndarray]:
    """Unpack (x_v, x_h) arrays for ``pulses`` pulses from a raw-bit file."""
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little")
    if len(bits) < 2 * pulses:
        raise DomainError("raw-bit data shorter than requested pulse count")
    pairs = bits[: 2 * pulses].reshape(-1, 2)
    return pairs[:, 0], pairs[:, 1]
