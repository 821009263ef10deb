import numpy as np
import pytest

from evlstm.events import Event, EventStream, SensorGeometry, concatenate
from evlstm.simulator import DotSceneConfig, simulate_dot
from evlstm.windowing import (
    Norm,
    WindowSpec,
    normalized_times,
    per_pixel_sequences,
    split_async,
    split_sync,
)

from conftest import random_stream


def stream_of(ts, geom=SensorGeometry(8, 8)):
    return EventStream.from_events(geom, [Event(int(t), int(t) % 8, 0, 1) for t in ts])


def test_empty_stream(geom):
    assert split_sync(EventStream.empty(geom), 10) == []
    assert split_async(EventStream.empty(geom), 10) == []


def test_single_sync_bin():
    w = split_sync(stream_of([0, 1_199_999]), 1_200_000)
    assert len(w) == 1 and not w[0].partial and len(w[0]) == 2


def test_sync_count_and_partial():
    w = split_sync(stream_of([100, 150, 2150]), 1000)
    # T = 2051 -> 3 windows, middle one empty, last truncated
    assert len(w) == 3
    assert [len(x) for x in w] == [2, 0, 1]
    assert (w[0].t_start, w[0].t_end) == (100, 1100)
    assert (w[2].t_start, w[2].t_end, w[2].partial) == (2100, 2151, True)


def test_sync_fifteen_windows_on_slow_scene():
    cfg = DotSceneConfig(frequency=0.17, duration=int(3 / 0.17 * 1e6), log_eps=1.7)
    s = simulate_dot(cfg)
    assert 14 <= len(split_sync(s, 1_200_000)) <= 16


@pytest.mark.parametrize("n, full, rem", [(2200, 2, 0), (2500, 2, 300), (1099, 0, 1099)])
def test_async_counts(n, full, rem):
    w = split_async(stream_of(range(n)), 1100)
    assert sum(not x.partial for x in w) == full
    assert all(len(x) == 1100 for x in w if not x.partial)
    assert (len(w[-1]) if w[-1].partial else 0) == rem


def test_async_bounds():
    w = split_async(stream_of([3, 5, 9, 20, 21]), 2)
    assert [(x.t_start, x.t_end) for x in w] == [(3, 6), (9, 21), (21, 22)]


@pytest.mark.parametrize("seed", range(5))
def test_partition(seed, geom):
    rng = np.random.default_rng(seed)
    s = random_stream(rng, geom, int(rng.integers(1, 3000)))
    for w in (split_sync(s, int(rng.integers(1, 300_000))), split_async(s, int(rng.integers(1, 700)))):
        assert concatenate([x.events for x in w]) == s
        assert sum(len(x) for x in w) == len(s)
        for x in w:
            if len(x):
                assert x.t_start <= x.events.t[0] and x.events.t[-1] < x.t_end


def test_async_structure_matches_across_speeds():
    counts = []
    for f in (0.8, 1.6, 3.2):
        s = simulate_dot(DotSceneConfig(frequency=f, duration=int(round(2e6 / f))))
        counts.append(len(split_async(s, 300)))
    assert max(counts) - min(counts) <= 1


def test_spec_dispatch():
    s = stream_of(range(10))
    assert len(WindowSpec.sync(3).split(s)) == 4
    assert len(WindowSpec.async_(3).split(s)) == 4
    assert WindowSpec.sync(3).default_norm is Norm.WINDOW_SPAN
    assert WindowSpec.async_(3).default_norm is Norm.EVENT_SPAN
    with pytest.raises(ValueError):
        WindowSpec("sync", dt=0)
    with pytest.raises(ValueError):
        WindowSpec("burst", dt=1)


def test_single_event_mid_window():
    g = SensorGeometry(8, 8)
    s = EventStream.from_events(g, [Event(0, 0, 0, 1), Event(500, 3, 4, 1), Event(999, 7, 7, 1)])
    w = split_sync(s, 1000)[0]
    seqs = per_pixel_sequences(w, Norm.WINDOW_SPAN)
    assert seqs[(3, 4)].tolist() == [0.5]


def test_event_span_degenerate():
    s = stream_of([7, 7, 7])
    w = split_async(s, 3)[0]
    assert normalized_times(w, Norm.EVENT_SPAN).tolist() == [0.0, 0.0, 0.0]


def test_empty_window_rejected():
    w = split_sync(stream_of([0, 5000]), 1000)
    with pytest.raises(ValueError):
        per_pixel_sequences(w[1])


@pytest.mark.parametrize("seed", range(5))
def test_group_by_oracle(seed, geom):
    rng = np.random.default_rng(seed)
    s = random_stream(rng, geom, 800, t_max=50_000)
    for w in split_sync(s, 20_000) + split_async(s, 333):
        if not len(w):
            continue
        for norm in Norm:
            seqs = per_pixel_sequences(w, norm)
            tn = normalized_times(w, norm)
            ref = {}
            for e, v in zip(w.events, tn):
                ref.setdefault((e.x, e.y), []).append(v)
            assert seqs.keys() == ref.keys()
            for k, v in ref.items():
                assert seqs[k].tolist() == v
                assert np.all(np.diff(seqs[k]) >= 0)
            assert np.all((tn >= 0) & (tn <= 1))
