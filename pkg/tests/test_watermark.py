import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rainbow.detect import normalized_correlation
from rainbow.errors import FlowFormatError, LengthMismatchError
from rainbow.flow import Flow, ipd, reconstruct
from rainbow.traffic import ModelAParams, gen_model_a
from rainbow.watermark import (
    EmbedStats,
    WatermarkParams,
    WatermarkRecord,
    WatermarkSequence,
    embed,
    format_record,
    gen_watermark,
    max_delay_introduced,
    parse_records,
    queue_delays,
)

A = 0.005


def simulate_queue(arrivals_ns, chips_ns, base_ns):
    """Packet-by-packet virtual queue: release times, clip count, FIFO holds."""
    release = [arrivals_ns[0] + base_ns]
    clips = holds = 0
    for i in range(1, len(arrivals_ns)):
        target = release[-1] + (arrivals_ns[i] - arrivals_ns[i - 1]) + chips_ns[i - 1]
        if target < release[-1]:
            holds += 1
            target = release[-1]
        if target < arrivals_ns[i]:
            clips += 1
            target = arrivals_ns[i]
        release.append(target)
    return np.array(release), clips, holds


def _flow(gaps_ns, origin=0.0):
    return Flow.from_offsets(origin, np.concatenate(([0], np.cumsum(gaps_ns))))


# --- sequence ---------------------------------------------------------------


def test_chips_are_antipodal():
    w = gen_watermark(WatermarkParams(key=42, n=1000, amplitude=A))
    assert set(np.unique(w.values)) == {-A, A}
    assert len(w) == 1000


def test_chip_balance():
    n = 10_000
    w = gen_watermark(WatermarkParams(key=1, n=n, amplitude=A))
    assert abs(w.values.mean()) <= 3 * A / np.sqrt(n)


def test_keys_determine_sequences():
    n = 10_000
    w1 = gen_watermark(WatermarkParams(key=1, n=n))
    assert gen_watermark(WatermarkParams(key=1, n=n)) == w1
    w2 = gen_watermark(WatermarkParams(key=2, n=n))
    assert abs(normalized_correlation(w1.values, w2.values)) <= 4 / np.sqrt(n)


def test_params_validation_and_warning():
    with pytest.raises(ValueError):
        WatermarkParams(1, 0)
    with pytest.raises(ValueError):
        WatermarkParams(1, 5, amplitude=0.0)
    with pytest.warns(UserWarning, match="invisibility"):
        WatermarkParams(1, 5, amplitude=0.02)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        WatermarkParams(1, 5, amplitude=0.02, amplitude_warn=0.05)


# --- embedder ---------------------------------------------------------------


def test_queue_example_hand_simulated():
    gaps = np.array([10**9, 10**9])
    chips = np.array([5_000_000, -5_000_000])
    delays, clips, holds = queue_delays(gaps, chips, 10_000_000)
    assert delays.tolist() == [10_000_000, 15_000_000, 10_000_000]
    assert (clips, holds) == (0, 0)
    arrivals = np.array([0, 10**9, 2 * 10**9])
    assert np.diff(arrivals + delays).tolist() == [1_005_000_000, 995_000_000]


def test_embed_example_outgoing_ipds():
    f = reconstruct(0.0, [1.0, 1.0])
    key = next(k for k in range(100) if gen_watermark(WatermarkParams(k, 2)).values.tolist() == [A, -A])
    out, rec = embed(f, WatermarkParams(key, 2, A), base_offset=0.01)
    assert ipd(out).tolist() == [1.005, 0.995]
    assert rec.embed_stats == EmbedStats(0.01, 0, 0)
    assert max_delay_introduced(f, out) <= 0.01 + 2 * A
    assert max_delay_introduced(f, out) == pytest.approx(0.015)


def test_all_negative_chips_without_offset_clip():
    gaps = np.full(5, 10**9)
    chips = np.full(5, -5_000_000)
    delays, clips, holds = queue_delays(gaps, chips, 0)
    assert clips == 5 and holds == 0
    assert np.all(delays == 0)  # released at arrival: realised IPDs equal the arrival spacing


@given(
    st.lists(st.integers(0, 300_000_000), min_size=1, max_size=80),
    st.integers(0, 2**32),
    st.integers(0, 100_000_000),
)
def test_closed_form_matches_packet_simulation(gaps, key, base_ns):
    gaps = np.array(gaps, dtype=np.int64)
    chips = np.where(np.random.default_rng(key).integers(0, 2, gaps.size) == 1, 5_000_000, -5_000_000)
    arrivals = np.concatenate(([0], np.cumsum(gaps)))
    delays, clips, holds = queue_delays(gaps, chips, base_ns)
    ref_release, ref_clips, ref_holds = simulate_queue(arrivals, chips, base_ns)
    assert np.array_equal(arrivals + delays, ref_release)
    assert (clips, holds) == (ref_clips, ref_holds)


@given(st.lists(st.integers(0, 300_000_000), min_size=1, max_size=80), st.integers(0, 2**32))
def test_large_offset_never_clips(gaps, key):
    n = len(gaps)
    f = _flow(np.array(gaps))
    out, rec = embed(f, WatermarkParams(key, n, A), base_offset=n * A)
    assert rec.embed_stats.clip_count == 0


@given(
    st.lists(st.integers(0, 300_000_000), min_size=1, max_size=80),
    st.integers(0, 2**32),
    st.floats(0, 0.2),
    st.integers(1, 100),
)
def test_causality_and_budget(gaps, key, base_offset, n):
    f = _flow(np.array(gaps), origin=12.5)
    out, rec = embed(f, WatermarkParams(key, n, A), base_offset=base_offset)
    assert len(out) == len(f)
    assert np.all(out.offsets_ns + round((out.origin - f.origin) * 1e9) >= f.offsets_ns)
    assert np.all(np.diff(out.offsets_ns) >= 0)
    n_eff = len(rec.watermark)
    assert max_delay_introduced(f, out) <= base_offset + n_eff * A + 1e-9


@given(st.lists(st.integers(5_000_000, 300_000_000), min_size=1, max_size=80), st.integers(0, 2**32))
def test_drawdown_budget_when_exact(gaps, key):
    n = len(gaps)
    f = _flow(np.array(gaps))
    out, rec = embed(f, WatermarkParams(key, n, A), base_offset=n * A)
    assert rec.embed_stats.exact
    prefix = np.concatenate(([0.0], np.cumsum(rec.watermark.values)))
    assert max_delay_introduced(f, out) <= n * A + prefix.max() + 1e-9


@given(st.lists(st.integers(5_000_000, 300_000_000), min_size=1, max_size=120), st.integers(0, 2**32), st.integers(1, 150))
def test_noiseless_detectability(gaps, key, n):
    f = _flow(np.array(gaps))
    out, rec = embed(f, WatermarkParams(key, n, A), base_offset=n * A)
    assert rec.embed_stats.exact
    k = min(n, len(gaps))
    d = ipd(out) - rec.recorded_ipds
    assert np.allclose(d[:k], rec.watermark.values[:k], rtol=0, atol=1e-12)
    assert np.allclose(d[k:], 0.0, rtol=0, atol=1e-12)


def test_record_captures_pre_embedding_ipds():
    f = gen_model_a(ModelAParams(n_packets=50, seed=3), "x")
    out, rec = embed(f, WatermarkParams(8, 49))
    assert np.array_equal(rec.recorded_ipds, ipd(f))
    assert rec.watermark == gen_watermark(WatermarkParams(8, 49))
    assert rec.flow_id == "x" and out.flow_id == "x"
    assert rec.embed_stats.base_offset == pytest.approx(10 * A)


def test_long_watermark_truncated_short_passes_through():
    f = reconstruct(0.0, np.full(10, 0.1))
    _, rec = embed(f, WatermarkParams(1, 25))
    assert len(rec.watermark) == 10
    out, rec = embed(f, WatermarkParams(1, 4), base_offset=0.05)
    assert np.allclose(ipd(out)[4:], 0.1, atol=1e-12)


def test_embed_is_deterministic():
    f = gen_model_a(ModelAParams(n_packets=200, seed=1))
    p = WatermarkParams(5, 199)
    o1, r1 = embed(f, p)
    o2, r2 = embed(f, p)
    assert o1 == o2 and r1 == r2


def test_embed_rejects_negative_offset():
    with pytest.raises(ValueError):
        embed(reconstruct(0, [1.0]), WatermarkParams(1, 1), base_offset=-0.1)


def test_max_delay_examples():
    f = reconstruct(3.0, [0.1, 0.2, 0.3])
    assert max_delay_introduced(f, f) == 0
    shifted = reconstruct(3.003, [0.1, 0.2, 0.3])
    assert max_delay_introduced(f, shifted) == pytest.approx(0.003, abs=1e-12)
    with pytest.raises(LengthMismatchError):
        max_delay_introduced(f, reconstruct(3.0, [0.1]))


# --- record format -----------------------------------------------------------


def test_record_round_trip():
    recs = []
    for i in range(3):
        f = gen_model_a(ModelAParams(n_packets=30, seed=i), f"flow {i}")
        recs.append(embed(f, WatermarkParams(i, 20 + i), base_offset=0.0)[1])
    text = "".join(format_record(r) for r in recs)
    assert parse_records(text.splitlines()) == recs
    assert recs[0].embed_stats.clip_count > 0


@pytest.mark.parametrize(
    "text, line",
    [
        ("0.1,0.005\n", 1),
        ("record,a\n0.1,x\n", 2),
        ("record,a\n0.1,0.005\nstats,base_offset=0\n", 3),
        ("record,a\n0.1,\n0.2,0.005\n", 3),
    ],
)
def test_record_parse_errors(text, line):
    with pytest.raises(FlowFormatError, match=f"line {line}"):
        parse_records(text.splitlines())


def test_record_rejects_watermark_longer_than_ipds():
    with pytest.raises(LengthMismatchError):
        WatermarkRecord("x", [0.1], WatermarkSequence([A, A], A))
