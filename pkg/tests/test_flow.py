import io
import pickle

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rainbow.errors import FlowError, FlowFormatError, LengthMismatchError
from rainbow.flow import Flow, ipd, load_flows, parse_flows, reconstruct, truncate_pair, write_flows

ns_gaps = st.lists(st.integers(0, 5 * 10**9), min_size=1, max_size=60)
origins = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@pytest.mark.parametrize(
    "stamps, expected",
    [
        ([0.0, 1.0, 3.0], [1.0, 2.0]),
        ([5.0, 5.0], [0.0]),
        ([0.0, 0.010, 0.025, 0.025], [0.010, 0.015, 0.0]),
    ],
)
def test_ipd_examples(stamps, expected):
    assert ipd(Flow(stamps)).tolist() == expected


def test_reconstruct_examples():
    assert reconstruct(0.0, [1.0, 2.0]).packets.tolist() == [0.0, 1.0, 3.0]
    assert reconstruct(0.0, [0.0, 0.0]).packets.tolist() == [0.0, 0.0, 0.0]
    with pytest.raises(FlowError):
        reconstruct(10.0, [])
    with pytest.raises(FlowError):
        reconstruct(0.0, [1.0, -0.5])


def test_truncate_pair_examples():
    a, b = truncate_pair([1, 2, 3], [4, 5])
    assert a.tolist() == [1, 2] and b.tolist() == [4, 5]
    a, b = truncate_pair([1], [1])
    assert a.tolist() == [1] and b.tolist() == [1]
    with pytest.raises(LengthMismatchError):
        truncate_pair([], [1])


@pytest.mark.parametrize("stamps", [[1.0], [], [0.0, 2.0, 1.0], [0.0, float("nan")]])
def test_flow_rejects_invalid(stamps):
    with pytest.raises(FlowError):
        Flow(stamps)


def test_flow_is_immutable():
    f = Flow([0.0, 1.0])
    with pytest.raises(AttributeError):
        f.flow_id = "x"
    with pytest.raises(ValueError):
        f.packets[0] = 3.0


@given(origins, ns_gaps)
def test_round_trip_is_exact(origin, gaps):
    f = reconstruct(origin, np.array(gaps) / 1e9, "f")
    again = reconstruct(f.packets[0], ipd(f), "f")
    assert again == f
    assert np.array_equal(again.packets, f.packets)
    assert np.array_equal(ipd(again), ipd(f))


@given(origins, ns_gaps)
def test_ipd_length_and_sign(origin, gaps):
    f = reconstruct(origin, np.array(gaps) / 1e9)
    v = ipd(f)
    assert v.size == len(f) - 1
    assert np.all(v >= 0)


@given(st.lists(st.floats(0, 10, allow_nan=False), min_size=2, max_size=40))
def test_ipd_matches_differencing_to_a_nanosecond(stamps):
    stamps = sorted(stamps)
    assert np.allclose(ipd(Flow(stamps)), np.diff(stamps), rtol=0, atol=1.5e-9)


def test_parse_examples():
    flows, skipped = parse_flows(["f1,0.0", "f1,1.0"])
    assert len(flows) == 1 and len(flows[0]) == 2 and skipped == []
    flows, _ = parse_flows(["# c", "f1,0.0", "f2,0.5", "f1,1.0", "f2,0.7"])
    assert [f.flow_id for f in flows] == ["f1", "f2"]
    assert ipd(flows[1]).tolist() == [0.2]


def test_parse_decreasing_names_line():
    with pytest.raises(FlowFormatError, match="line 2"):
        parse_flows(["f1,1.0", "f1,0.5"])


@pytest.mark.parametrize("line", ["f1", "f1,abc", ",1.0", "f1,1.0,2.0", "f1,inf"])
def test_parse_malformed_reports_line(line):
    with pytest.raises(FlowFormatError, match="line 2"):
        parse_flows(["f0,0.0", line])


def test_load_skips_short_flows(tmp_path):
    p = tmp_path / "flows.txt"
    p.write_text("a,0\na,1\nb,3\n")
    with pytest.warns(UserWarning, match="b"):
        flows = load_flows(p)
    assert [f.flow_id for f in flows] == ["a"]


@given(origins, ns_gaps)
def test_file_round_trip_is_exact(origin, gaps):
    f = reconstruct(origin, np.array(gaps) / 1e9, "x")
    buf = io.StringIO()
    write_flows(buf, [f], header="h")
    flows, _ = parse_flows(buf.getvalue().splitlines())
    assert flows == [f]


def test_pickle_round_trip():
    f = reconstruct(1.5, [0.1, 0.2], "p")
    assert pickle.loads(pickle.dumps(f)) == f


def test_microsecond_precision_preserved():
    flows, _ = parse_flows(["f,1700000000.000001", "f,1700000000.000003"])
    assert ipd(flows[0])[0] == pytest.approx(2e-6, abs=1e-12)
