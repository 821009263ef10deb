import json
import os

import numpy as np
import pytest

from evlstm.cli import main
from evlstm.events import read_binary


def run(*args):
    return main([str(a) for a in args])


def files(d):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


def test_simulate_then_window(tmp_path, capsys):
    ev = tmp_path / "dot.bin"
    assert run("simulate", "--freq", 1.6, "--duration-ms", 1200, "-o", ev) == 0
    capsys.readouterr()
    assert run("window", ev, "--mode", "async", "--count", 1100) == 0
    index = json.loads(capsys.readouterr().out)
    assert index["n_events"] == len(read_binary(ev))
    assert index["full_window_count"] == index["n_events"] // 1100
    assert sum(w["n_events"] for w in index["windows"]) == index["n_events"]


def test_window_events_dir(tmp_path):
    ev = tmp_path / "dot.csv"
    assert run("simulate", "-o", ev) == 0
    assert run("window", ev, "--mode", "sync", "--dt-us", 300_000, "--events-dir", tmp_path / "w",
               "-o", tmp_path / "i.json") == 0
    index = json.loads((tmp_path / "i.json").read_text())
    assert len(list((tmp_path / "w").iterdir())) == index["window_count"]


def test_usage_errors_exit_1(tmp_path):
    assert run("simulate") == 1
    assert run("simulate", "-o", tmp_path / "x.bin", "--bogus") == 1
    assert run("nosuchcommand") == 1
    (tmp_path / "c.json").write_text('{"unknown_key": 3}')
    assert run("simulate", "-o", tmp_path / "x.bin", "--config", tmp_path / "c.json") == 1
    assert not (tmp_path / "x.bin").exists()


def test_data_errors_exit_2_and_leave_nothing(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2,3,1\n4,5,6,7\n")
    assert run("denoise", bad, "-o", tmp_path / "out.bin") == 2
    (tmp_path / "m.bin").write_bytes(b"EVLSTMAE" + b"\0" * 5)
    ev = tmp_path / "e.bin"
    assert run("simulate", "-o", ev) == 0
    assert run("extract", ev, "--model", tmp_path / "m.bin", "-o", tmp_path / "g") == 2
    assert run("simulate", "--radius", 40, "-o", tmp_path / "big.bin") == 2
    assert sorted(p.name for p in tmp_path.iterdir()) == ["bad.csv", "e.bin", "m.bin"]


def test_dump_config_round_trip(tmp_path, capsys):
    out = tmp_path / "a.bin"
    assert run("simulate", "--freq", 2.2, "--noise-rate", 1, "--seed", 5, "-o", out, "--dump-config") == 0
    cfg = capsys.readouterr().out
    assert not out.exists()
    (tmp_path / "cfg.json").write_text(cfg)
    assert run("simulate", "--config", tmp_path / "cfg.json") == 0
    direct = tmp_path / "b.bin"
    assert run("simulate", "--freq", 2.2, "--noise-rate", 1, "--seed", 5, "-o", direct) == 0
    assert out.read_bytes() == direct.read_bytes()


def test_flags_override_config(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"freq": 3.0, "output": str(tmp_path / "a.bin")}))
    assert run("simulate", "--config", tmp_path / "c.json", "--freq", 1.0) == 0
    assert run("simulate", "--freq", 1.0, "-o", tmp_path / "b.bin") == 0
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()


def test_denoise_report(tmp_path):
    ev = tmp_path / "n.bin"
    assert run("simulate", "--noise-rate", 3, "-o", ev) == 0
    for f in ("memory", "baseline"):
        assert run("denoise", ev, "--filter", f, "-o", tmp_path / f"{f}.bin", "--report", tmp_path / f"{f}.json") == 0
        rep = json.loads((tmp_path / f"{f}.json").read_text())
        assert set(rep) == {"nr", "mse", "signal_retention", "noise_retention"}
        assert 0 <= rep["nr"] <= 1


def test_eval_perfect_clusters(tmp_path, capsys):
    rng = np.random.default_rng(0)
    rows = []
    for k, name in enumerate(["a", "b", "c"]):
        for _ in range(5):
            v = np.zeros(4)
            v[k] = 1.0
            v += rng.normal(0, 0.01, 4)
            rows.append(name + "," + ",".join(repr(float(x)) for x in v))
    (tmp_path / "tr.csv").write_text("label,f0,f1,f2,f3\n" + "\n".join(rows) + "\n")
    assert run("eval", "--train", tmp_path / "tr.csv", "--test", tmp_path / "tr.csv",
               "-o", tmp_path / "r.json", "--confusion", tmp_path / "c.csv") == 0
    rep = json.loads((tmp_path / "r.json").read_text())
    assert rep["macro"]["f1"] == 1.0
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "true\\pred,a,b,c"
    assert run("eval") == 1


def test_bench_energy(capsys):
    assert run("bench-energy") == 0
    rep = json.loads(capsys.readouterr().out)
    modes = {r["mode"]: r["window_count"] for r in rep["rows"]}
    assert modes == {"sync": 15, "async": 2}
    assert rep["ratio"] == 7.5


def pipeline(d, threads):
    env = os.environ.get("EVLSTM_THREADS")
    os.environ["EVLSTM_THREADS"] = str(threads)
    try:
        assert run("simulate", "--noise-rate", 1, "--seed", 3, "-o", d / "ev.bin") == 0
        assert run("denoise", d / "ev.bin", "-o", d / "dn.csv", "--report", d / "dn.json") == 0
        assert run("train", d / "dn.csv", "--epochs", 2, "--hidden", 4, "--mode", "sync", "--dt-us", 200_000,
                   "-o", d / "m.bin", "--report", d / "train.json") == 0
        assert run("extract", d / "dn.csv", "--model", d / "m.bin", "--mode", "sync", "--dt-us", 200_000,
                   "-o", d / "grids") == 0
        assert run("surface", d / "dn.csv", "--kind", "exp", "-o", d / "surf") == 0
    finally:
        if env is None:
            os.environ.pop("EVLSTM_THREADS")
        else:
            os.environ["EVLSTM_THREADS"] = env


def test_pipeline_is_byte_deterministic(tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    pipeline(tmp_path / "a", 1)
    pipeline(tmp_path / "b", 4)
    a, b = files(tmp_path / "a"), files(tmp_path / "b")
    assert a.keys() == b.keys() and len(a) > 8
    assert a == b
