import io
import math

import numpy as np
import pytest

from truerand.errors import DomainError
from truerand.models import (
    DetailedModel,
    DetailedModelParams,
    SimpleModelParams,
    raw_distribution_simple,
    solve_px,
)
from truerand.simulator import (
    CHUNK,
    SIDE_INFO_RECORD,
    PulseBatch,
    SimulationConfig,
    chi,
    detector_toy_batch,
    empirical_guessing_probability,
    read_raw_bits,
    read_side_info,
    simulate,
    simulate_batches,
    write_outputs,
)

import oracles


def _concat(config):
    batches = list(simulate_batches(config))
    return {f: np.concatenate([getattr(b, f) for b in batches]) for f in ("n", "r_v", "r_h", "s_v", "s_h", "x_v", "x_h")}


def _within(freq, p, samples, k=4.0):
    sigma = math.sqrt(max(p * (1 - p), 1e-300) / samples)
    return abs(freq - p) <= k * sigma


def test_chi_examples():
    assert chi(["v", "h", "v"], 3, 2, 1, 0, 0) == (1, 1)
    assert chi(["v", "h", "v"], 3, 3, 2, 0, 0) == (0, 0)
    assert chi([], 0, 1, 1, 1, 0) == (1, 0)
    assert chi([1, 1], 2, 1, 1, 0, 0) == (1, 0)
    with pytest.raises(DomainError):
        chi([1], 2, 1, 1, 0, 0)
    with pytest.raises(DomainError):
        chi([1], 1, 0, 1, 0, 0)


def test_chi_matches_oracle_exhaustively():
    for n in range(5):
        for code in range(2**n):
            paths = [(code >> i) & 1 for i in range(n)]
            for r_v in range(1, n + 2):
                for r_h in range(1, n + 2):
                    for s_v in (0, 1):
                        for s_h in (0, 1):
                            x_v, x_h = chi(paths, n, r_v, r_h, s_v, s_h)
                            assert 2 * x_v + x_h == oracles.chi_bits(paths, r_v, r_h, s_v, s_h)


def test_same_seed_same_stream():
    config = SimulationConfig(DetailedModelParams(2.0, 0.3, 0.01, 0.05, 0.05), 5000, rng_seed=42)
    a, b = _concat(config), _concat(config)
    for f in a:
        np.testing.assert_array_equal(a[f], b[f])
    c = _concat(SimulationConfig(config.params, 5000, rng_seed=43))
    assert not np.array_equal(a["n"], c["n"])


def test_chunks_are_independent_of_total_length():
    params = SimpleModelParams(1.0, 0.5)
    short = _concat(SimulationConfig(params, 1000, rng_seed=5))
    long = _concat(SimulationConfig(params, CHUNK + 10, rng_seed=5))
    for f in short:
        np.testing.assert_array_equal(short[f], long[f][:1000])


def test_records_obey_chi():
    config = SimulationConfig(DetailedModelParams(3.0, 0.4, 0.05, 0.1, 0.1), 3000, rng_seed=1)
    records = list(simulate(config))
    assert len(records) == 3000
    assert all(r.consistent() for r in records)
    assert all(1 <= r.r_v <= r.n + 1 and 1 <= r.r_h <= r.n + 1 for r in records)


def test_paths_are_fair():
    batch = next(simulate_batches(SimulationConfig(SimpleModelParams(5.0, 0.1), 200_000, rng_seed=3)))
    ones = int(batch.paths.sum())
    assert _within(ones / len(batch.paths), 0.5, len(batch.paths))


def test_simple_outcomes_match_closed_form():
    params = SimpleModelParams(2.0, 0.1)
    d = _concat(SimulationConfig(params, 1_000_000, rng_seed=9))
    freqs = np.bincount(2 * d["x_v"].astype(int) + d["x_h"], minlength=4) / 1_000_000
    expected = raw_distribution_simple(params).probs
    for f, p in zip(freqs, expected):
        assert _within(f, p, 1_000_000)
    assert not d["s_v"].any() and not d["s_h"].any()


def test_detailed_outcomes_match_independent_noise_law():
    params = DetailedModelParams(4.0, 0.2, 0.01, 0.02, 0.03)
    d = _concat(SimulationConfig(params, 1_000_000, rng_seed=10))
    freqs = np.bincount(2 * d["x_v"].astype(int) + d["x_h"], minlength=4) / 1_000_000
    expected = DetailedModel(params).raw_distribution()
    for f, p in zip(freqs, expected):
        assert _within(f, p, 1_000_000)
    p_s = solve_px(params).p_s
    assert _within(d["s_v"].mean(), p_s, 1_000_000)


def test_mechanistic_noise_marginal_matches_fixed_point():
    params = DetailedModelParams(2.0, 0.1, 0.01, 0.05, 0.05)
    d = _concat(SimulationConfig(params, 1_000_000, rng_seed=4, noise_mode="mechanistic"))
    p_s = solve_px(params).p_s
    # consecutive pulses are correlated, so allow a wider band than iid
    assert abs(d["s_v"].mean() - p_s) < 8 * math.sqrt(p_s * (1 - p_s) / 1_000_000)
    assert abs(d["s_h"].mean() - p_s) < 8 * math.sqrt(p_s * (1 - p_s) / 1_000_000)


def test_mechanistic_first_pulse_only_dark_counts():
    params = DetailedModelParams(0.0, 0.1, 0.0, 0.9, 0.9)
    d = _concat(SimulationConfig(params, 100, rng_seed=0, noise_mode="mechanistic"))
    # no light and no dark counts: nothing can ever start a click chain
    assert not d["x_v"].any() and not d["x_h"].any()


def test_detector_toy_guessing():
    batch = detector_toy_batch(0.1, 1_000_000, rng_seed=2)
    est = empirical_guessing_probability(batch, ["r_v"])
    assert abs(est.probability - 0.95) < 4 * est.stderr
    assert est.samples == 1_000_000
    blind = empirical_guessing_probability(batch)
    assert blind.probability > 0.5


def test_empirical_guess_accepts_records_and_batches():
    config = SimulationConfig(SimpleModelParams(1.0, 0.5), 2000, rng_seed=8)
    a = empirical_guessing_probability(simulate_batches(config), ["n", "r_v", "r_h"])
    b = empirical_guessing_probability(simulate(config), ["n", "r_v", "r_h"])
    assert a == b
    with pytest.raises(DomainError):
        empirical_guessing_probability(simulate_batches(config), ["q"])
    with pytest.raises(DomainError):
        empirical_guessing_probability(simulate_batches(config), ["n", "n"])
    with pytest.raises(DomainError):
        empirical_guessing_probability([])


def test_file_formats_round_trip():
    config = SimulationConfig(DetailedModelParams(2.0, 0.2, 0.01, 0.01, 0.01), 1001, rng_seed=6)
    raw, side = io.BytesIO(), io.BytesIO()
    counts = write_outputs(simulate_batches(config), raw, side)
    d = _concat(config)
    assert counts.sum() == 1001
    assert len(raw.getvalue()) == math.ceil(2 * 1001 / 8)
    assert len(side.getvalue()) == 1001 * SIDE_INFO_RECORD.itemsize == 1001 * 16
    x_v, x_h = read_raw_bits(raw.getvalue(), 1001)
    np.testing.assert_array_equal(x_v, d["x_v"])
    np.testing.assert_array_equal(x_h, d["x_h"])
    back = read_side_info(side.getvalue())
    for f in d:
        np.testing.assert_array_equal(getattr(back, f), d[f])
    with pytest.raises(DomainError):
        read_side_info(b"\x00" * 15)


def test_raw_bits_are_lsb_first_pairs():
    batch = PulseBatch(
        n=np.array([1, 1, 1, 1]), r_v=np.ones(4), r_h=np.ones(4), s_v=np.zeros(4), s_h=np.zeros(4),
        x_v=np.array([1, 0, 0, 1], dtype=np.uint8), x_h=np.array([0, 1, 0, 1], dtype=np.uint8),
    )
    out = io.BytesIO()
    write_outputs([batch], out)
    # bits x_v0 x_h0 x_v1 x_h1 ... = 1,0, 0,1, 0,0, 1,1
    assert out.getvalue() == bytes([0b11_00_10_01])


def test_zero_pulses():
    raw, side = io.BytesIO(), io.BytesIO()
    counts = write_outputs(simulate_batches(SimulationConfig(SimpleModelParams(1.0, 0.1), 0)), raw, side)
    assert counts.tolist() == [0, 0, 0, 0]
    assert raw.getvalue() == b"" and side.getvalue() == b""


def test_config_validation():
    p = SimpleModelParams(1.0, 0.1)
    with pytest.raises(DomainError):
        SimulationConfig(p, -1)
    with pytest.raises(DomainError):
        SimulationConfig(p, 10, noise_mode="bursty")
    with pytest.raises(DomainError):
        SimulationConfig(p, 10, rng_seed=-1)


def test_cross_fit_estimate():
    batch = detector_toy_batch(0.1, 1_000_000, rng_seed=12)
    est = empirical_guessing_probability(batch, ["r_v"], cross_fit=True)
    assert abs(est.probability - 0.95) < 4 * est.stderr
    assert est.samples == 1_000_000


def test_cross_fit_removes_tie_bias():
    # a fair bit with no side information: the plug-in max always overshoots 1/2
    def estimates(**kw):
        return [
            empirical_guessing_probability(detector_toy_batch(1.0, 2000, rng_seed=s), **kw).probability
            for s in range(200)
        ]

    sigma = 0.5 / math.sqrt(2000 * 200)
    assert np.mean(estimates()) - 0.5 > 4 * sigma
    assert abs(np.mean(estimates(cross_fit=True)) - 0.5) < 4 * sigma
