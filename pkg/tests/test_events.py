import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evlstm.events import (
    NOISE,
    SIGNAL,
    Event,
    EventFormatError,
    EventStream,
    LabeledEvent,
    SensorGeometry,
    decode_binary,
    encode_binary,
    read_binary,
    read_csv,
    validate,
    write_binary,
    write_csv,
)

from conftest import random_stream


def test_empty_csv(tmp_path, geom):
    f = tmp_path / "e.csv"
    f.write_text("")
    s = read_csv(f, geom)
    assert len(s) == 0


def test_single_line(tmp_path, geom):
    f = tmp_path / "e.csv"
    f.write_text("1000,3,4,1\n")
    s = read_csv(f, geom)
    assert list(s) == [Event(t=1000, x=3, y=4, p=1)]


def test_header_line_ignored(tmp_path, geom):
    f = tmp_path / "e.csv"
    f.write_text("t,x,y,p\n5,1,1,-1\n")
    assert read_csv(f, geom)[0] == Event(5, 1, 1, -1)


@pytest.mark.parametrize(
    "body, needle",
    [
        ("1,2,3\n", "line 1"),
        ("1,2,3,1\nfoo,1,1,1\n", "line 2"),
        ("1,64,3,1\n", "outside"),
        ("1,2,3,0\n", "polarity"),
        ("1,2,3,1,q\n", "label"),
    ],
)
def test_csv_errors(tmp_path, geom, body, needle):
    f = tmp_path / "e.csv"
    f.write_text(body)
    with pytest.raises(EventFormatError, match=needle):
        read_csv(f, geom)


def test_write_empty(tmp_path, geom):
    f = tmp_path / "e.csv"
    write_csv(EventStream.empty(geom), f)
    assert f.read_bytes() == b""


def test_write_three_in_order(tmp_path, geom):
    s = EventStream.from_events(geom, [Event(1, 0, 0, 1), Event(2, 1, 0, -1), Event(3, 0, 1, 1)])
    f = tmp_path / "e.csv"
    write_csv(s, f)
    assert f.read_text().splitlines() == ["1,0,0,1", "2,1,0,-1", "3,0,1,1"]


def test_csv_sorts_with_tie_break(tmp_path, geom):
    f = tmp_path / "e.csv"
    f.write_text("10,5,2,1\n10,1,3,1\n10,1,2,1\n10,1,2,-1\n3,9,9,1\n")
    s = read_csv(f, geom)
    assert [(e.t, e.y, e.x, e.p) for e in s] == [
        (3, 9, 9, 1), (10, 2, 1, -1), (10, 2, 1, 1), (10, 2, 5, 1), (10, 3, 1, 1)
    ]
    assert validate(s) == []


@pytest.mark.parametrize("labeled", [False, True])
def test_csv_file_round_trip_bytes(tmp_path, geom, labeled):
    rng = np.random.default_rng(3)
    s = random_stream(rng, geom, 500, labeled=labeled)
    f1, f2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_csv(s, f1)
    write_csv(read_csv(f1, geom), f2)
    assert f1.read_bytes() == f2.read_bytes()
    assert read_csv(f1, geom) == s


def test_binary_header_only(tmp_path):
    g = SensorGeometry(32, 16)
    f = tmp_path / "e.bin"
    write_binary(EventStream.empty(g), f)
    assert f.read_bytes() == b"EVLSTM01" + (32).to_bytes(2, "little") + (16).to_bytes(2, "little")
    s = read_binary(f)
    assert len(s) == 0 and s.geometry == g


def test_binary_record_layout(geom):
    s = EventStream.from_events(geom, [LabeledEvent(Event(2**40 + 7, 3, 4, -1), NOISE)])
    data = encode_binary(s)
    rec = data[12:]
    assert len(rec) == 14
    assert int.from_bytes(rec[0:8], "little") == 2**40 + 7
    assert int.from_bytes(rec[8:10], "little") == 3
    assert int.from_bytes(rec[10:12], "little") == 4
    assert rec[12:13] == b"\xff" and rec[13] == 2


def test_binary_bad_magic(geom):
    data = bytearray(encode_binary(random_stream(np.random.default_rng(0), geom, 10)))
    data[0:8] = b"NOTMAGIC"
    with pytest.raises(EventFormatError, match="magic"):
        decode_binary(bytes(data))


def test_binary_truncated(geom):
    data = encode_binary(random_stream(np.random.default_rng(0), geom, 10))
    with pytest.raises(EventFormatError, match="truncated"):
        decode_binary(data[:-3])
    with pytest.raises(EventFormatError, match="truncated"):
        decode_binary(data[:5])


def test_binary_csv_cross_format(tmp_path, geom):
    s = random_stream(np.random.default_rng(11), geom, 300, labeled=True)
    write_binary(s, tmp_path / "e.bin")
    write_csv(read_binary(tmp_path / "e.bin"), tmp_path / "e.csv")
    back = read_csv(tmp_path / "e.csv", geom)
    assert back == s
    write_binary(back, tmp_path / "f.bin")
    assert (tmp_path / "e.bin").read_bytes() == (tmp_path / "f.bin").read_bytes()


def test_validate_sorted_stream(geom):
    assert validate(random_stream(np.random.default_rng(1), geom, 50)) == []


def test_validate_decreasing_time_at_5(geom):
    evs = [Event(t, 0, 0, 1) for t in (0, 1, 2, 3, 4, 2, 6)]
    v = validate(EventStream.from_events(geom, evs))
    assert [x.index for x in v] == [5]
    assert v[0].kind == "order"


def test_validate_bounds(geom):
    s = EventStream(geom, [0, 1], [0, geom.width], [0, 0], [1, 1])
    v = validate(s)
    assert len(v) == 1 and v[0].index == 1 and v[0].kind == "bounds"


def test_stream_is_immutable(geom):
    s = random_stream(np.random.default_rng(0), geom, 5)
    with pytest.raises(ValueError):
        s.t[0] = 5


events_strategy = st.lists(
    st.tuples(
        st.integers(0, 2**63 - 1),
        st.integers(0, 9),
        st.integers(0, 6),
        st.sampled_from([-1, 1]),
        st.sampled_from([0, SIGNAL, NOISE]),
    ),
    max_size=40,
)


@settings(max_examples=60, deadline=None)
@given(events_strategy)
def test_sort_makes_valid(rows):
    g = SensorGeometry(10, 7)
    s = EventStream.from_events(g, [LabeledEvent(Event(*r[:4]), r[4]) for r in rows])
    assert validate(s.sorted()) == []


@settings(max_examples=60, deadline=None)
@given(events_strategy)
def test_round_trips_lossless(tmp_path_factory, rows):
    g = SensorGeometry(10, 7)
    s = EventStream.from_events(g, [LabeledEvent(Event(*r[:4]), r[4]) for r in rows]).sorted()
    d = tmp_path_factory.mktemp("rt")
    write_csv(s, d / "e.csv")
    write_binary(s, d / "e.bin")
    assert read_csv(d / "e.csv", g) == s
    assert read_binary(d / "e.bin") == s
