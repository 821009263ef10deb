import math
from pathlib import Path

import numpy as np
import pytest

from evlstm import _backend
from evlstm.events import Event, EventStream, SensorGeometry
from evlstm.surfaces import (
    KINDS,
    Grid,
    SurfaceKind,
    build_surface,
    decode_pgm,
    encode_pgm,
    export_grid,
    normalize_grid,
    read_grid_csv,
    reduce_channels,
)
from evlstm.windowing import Window, split_async, split_sync

from conftest import random_stream

DATA = Path(__file__).parent / "data"


def oracle(window, kind, geometry):
    kind = SurfaceKind(kind) if isinstance(kind, str) else kind
    g = np.zeros((geometry.height, geometry.width))
    span = window.t_end - window.t_start
    state = {}
    for e in window.events:
        if kind.name == "count":
            g[e.y, e.x] += 1
        elif kind.name == "on":
            g[e.y, e.x] += e.p == 1
        elif kind.name == "off":
            g[e.y, e.x] += e.p == -1
        elif kind.name == "sae":
            g[e.y, e.x] = min(max((e.t - window.t_start) / span, 0.0), 1.0)
        elif kind.name == "exp":
            g[e.y, e.x] = math.exp(-(window.t_end - e.t) / kind.tau)
        else:
            v, last = state.get((e.x, e.y), (0.0, None))
            if last is not None:
                v *= math.exp(-(e.t - last) / kind.leak_tau)
            v += kind.w
            if v >= kind.v_threshold:
                g[e.y, e.x] += 1
                v = 0.0
            state[(e.x, e.y)] = (v, e.t)
    return g[:, :, None]


def random_windows(n, seed=0):
    rng = np.random.default_rng(seed)
    g = SensorGeometry(12, 9)
    out = []
    while len(out) < n:
        s = random_stream(rng, g, int(rng.integers(1, 200)), t_max=int(rng.integers(1, 200_000)))
        out += split_sync(s, int(rng.integers(1000, 100_000))) + split_async(s, int(rng.integers(1, 80)))
    return g, out[:n]


@pytest.mark.parametrize("kind", KINDS)
def test_empty_window_zero_grid(kind, geom):
    w = Window(EventStream.empty(geom), 0, 1000, 0)
    assert build_surface(w, kind) == Grid.zeros(geom)


def test_sae_single_event():
    g = SensorGeometry(8, 8)
    w = Window(EventStream.from_events(g, [Event(500, 3, 4, 1)]), 0, 1000, 0)
    v = build_surface(w, "sae").values[:, :, 0]
    expect = np.zeros((8, 8))
    expect[4, 3] = 0.5
    assert np.array_equal(v, expect)


@pytest.mark.parametrize("kind", KINDS)
def test_matches_brute_force(kind):
    g, wins = random_windows(150, seed=KINDS.index(kind))
    backends = ["python"] + (["cython"] if _backend.BACKEND == "cython" else [])
    for w in wins:
        ref = oracle(w, kind, g)
        for b in backends:
            assert np.array_equal(build_surface(w, kind, g, backend=b).values, ref)


def test_count_is_on_plus_off_and_spikes_bounded():
    g, wins = random_windows(300, seed=42)
    for w in wins:
        c = build_surface(w, "count").values
        assert np.array_equal(c, build_surface(w, "on").values + build_surface(w, "off").values)
        assert np.all(build_surface(w, "snn").values <= c)
        for k in ("sae", "exp"):
            v = build_surface(w, k).values
            assert np.all((v >= 0) & (v <= 1))


def test_permutation_across_pixels():
    g = SensorGeometry(6, 6)
    a = EventStream.from_events(g, [Event(10, 1, 1, 1), Event(10, 2, 2, -1), Event(40, 1, 1, 1)])
    b = EventStream.from_events(g, [Event(10, 2, 2, -1), Event(10, 1, 1, 1), Event(40, 1, 1, 1)])
    for k in KINDS:
        assert build_surface(Window(a, 0, 100, 0), k) == build_surface(Window(b, 0, 100, 0), k)


def test_snn_threshold_two():
    g = SensorGeometry(2, 1)
    s = EventStream.from_events(g, [Event(0, 0, 0, 1), Event(0, 0, 0, 1), Event(10**7, 1, 0, 1),
                                    Event(2 * 10**7, 1, 0, 1)])
    v = build_surface(Window(s, 0, 2 * 10**7 + 1, 0), "snn").values[0, :, 0]
    assert v.tolist() == [1.0, 0.0]


def test_kind_validation():
    with pytest.raises(ValueError):
        SurfaceKind("hats")
    with pytest.raises(ValueError):
        SurfaceKind("exp", tau=0)
    with pytest.raises(ValueError):
        SurfaceKind("snn", v_threshold=0)


def test_normalize():
    z = Grid(np.zeros((2, 3)))
    assert normalize_grid(z, "maxabs") == z and normalize_grid(z, "minmax") == z
    assert normalize_grid(Grid(np.array([[2.0, 4.0, 6.0]])), "minmax").values.ravel().tolist() == [0, 0.5, 1]
    rng = np.random.default_rng(0)
    for _ in range(20):
        v = normalize_grid(Grid(rng.normal(size=(4, 5, 3))), "maxabs").values
        assert np.max(np.abs(v)) == 1.0
    assert normalize_grid(Grid(np.full((2, 2), 3.0)), "minmax") == Grid(np.zeros((2, 2)))


def test_reduce_channels():
    v = np.zeros((1, 1, 2))
    v[0, 0] = (3.0, 4.0)
    assert reduce_channels(Grid(v), "l2").values.item() == 5.0
    assert reduce_channels(Grid(v), "mean").values.item() == 3.5
    assert reduce_channels(Grid(v), "1").values.item() == 4.0


def test_grid_rejects_non_finite():
    with pytest.raises(ValueError):
        Grid(np.array([[np.nan]]))


def test_pgm_single_pixel():
    data = encode_pgm(Grid(np.ones((1, 1))))
    assert data.endswith(b"\xff\xff")
    assert decode_pgm(data) == Grid(np.ones((1, 1)))


def test_pgm_golden(tmp_path):
    export_grid(Grid(np.eye(2)), tmp_path / "g.pgm")
    assert (tmp_path / "g.pgm").read_bytes() == (DATA / "identity_2x2.pgm").read_bytes()


def test_pgm_errors():
    with pytest.raises(ValueError):
        encode_pgm(Grid(np.array([[1.5]])))
    with pytest.raises(ValueError):
        encode_pgm(Grid(np.zeros((2, 2, 3))))


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    g = Grid(rng.random((7, 5)) * 1e3 - 500)
    export_grid(g, tmp_path / "g.csv")
    first = (tmp_path / "g.csv").read_bytes()
    assert read_grid_csv(tmp_path / "g.csv") == g
    export_grid(g, tmp_path / "g.csv")
    assert (tmp_path / "g.csv").read_bytes() == first
