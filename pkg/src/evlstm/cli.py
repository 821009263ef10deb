"""Command-line entry point: ``evlstm <command> [options]``.

Every command accepts ``--config file.json`` (keys are the option names with
underscores; flags given on the command line win) and ``--dump-config``,
which prints the fully resolved options as JSON and exits. Exit codes are
0 on success, 1 on usage errors and 2 on data errors. Outputs are written to
a temporary file and renamed into place, so a failed run leaves nothing
behind.
"""
from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click
import numpy as np
from click.core import ParameterSource

from . import denoise as dn
from . import experiments as ex
from .evalkit import FeatureVector, compute_metrics, fit_centroids, predict
from .eventlstm import (
    ModelFormatError,
    TrainConfig,
    extract_grid,
    load_model,
    save_model,
    train as train_model,
)
from .events import SIGNAL, EventFormatError, SensorGeometry, _atomic_write, read_events, write_events
from .simulator import DotSceneConfig, NoiseConfig, SceneError, inject_shot_noise, simulate_dot
from .surfaces import (
    KINDS,
    SurfaceKind,
    build_surface,
    export_grid,
    normalize_grid,
    reduce_channels,
    save_grid_npy,
)
from .windowing import Norm, WindowSpec, per_pixel_sequences

DATA_ERRORS = (EventFormatError, ModelFormatError, SceneError, ValueError, OSError)


class DataError(click.ClickException):
    exit_code = 2


def _write_json(obj, path) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is None or str(path) == "-":
        click.echo(text, nl=False)
    else:
        _atomic_write(path, text.encode("utf-8"))


def _resolve(ctx: click.Context, params: dict) -> dict:
    """Merge ``--config`` into params (command-line flags win), then honour ``--dump-config``."""
    config_path = params.pop("config_path")
    dump = params.pop("dump_config")
    if config_path:
        try:
            cfg = json.loads(Path(config_path).read_text())
        except json.JSONDecodeError as e:
            raise click.UsageError(f"config {config_path}: {e}")
        if not isinstance(cfg, dict):
            raise click.UsageError("config file must hold a JSON object")
        unknown = sorted(set(cfg) - set(params))
        if unknown:
            raise click.UsageError(f"unknown config keys: {', '.join(unknown)}")
        by_name = {p.name: p for p in ctx.command.params}
        for k, v in cfg.items():
            if ctx.get_parameter_source(k) in (ParameterSource.COMMANDLINE, ParameterSource.ENVIRONMENT):
                continue
            p = by_name[k]
            if p.multiple or p.nargs == -1:
                v = v if isinstance(v, list) else [v]
            try:
                params[k] = p.type_cast_value(ctx, v)
            except click.BadParameter as e:
                raise click.UsageError(f"config key {k!r}: {e.message}")
    if dump:
        out = {k: list(v) if isinstance(v, tuple) else v for k, v in params.items()}
        click.echo(json.dumps(out, indent=2, sort_keys=True))
        ctx.exit(0)
    return params


def configurable(*required: str):
    """Add --config/--dump-config and route the merged options into the command.

    ``required`` names options that must be set by a flag or the config file;
    click itself cannot enforce them because it validates before the merge.
    """
    return functools.partial(_configurable, required=required)


def _configurable(f, required=()):
    @click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                  help="JSON file of option values; command-line flags override it.")
    @click.option("--dump-config", is_flag=True, help="Print the resolved options as JSON and exit.")
    @click.pass_context
    @functools.wraps(f)
    def wrapper(ctx, **params):
        params = _resolve(ctx, params)
        missing = [k for k in required if params.get(k) in (None, ())]
        if missing:
            flags = ", ".join("--" + k.replace("_", "-") for k in missing)
            raise click.UsageError(f"missing required option(s): {flags}")
        try:
            return f(**params)
        except click.ClickException:
            raise
        except DATA_ERRORS as e:
            raise DataError(str(e))

    return wrapper


def geometry_options(f):
    f = click.option("--height", type=click.IntRange(1, 65535), default=64, show_default=True,
                     help="Sensor height for CSV input.")(f)
    f = click.option("--width", type=click.IntRange(1, 65535), default=64, show_default=True,
                     help="Sensor width for CSV input.")(f)
    return f


def window_options(f):
    f = click.option("--count", type=click.IntRange(1), default=ex.ASYNC_COUNT, show_default=True,
                     help="Events per async window.")(f)
    f = click.option("--dt-us", type=click.IntRange(1), default=ex.SYNC_DT, show_default=True,
                     help="Sync window length in µs.")(f)
    f = click.option("--mode", type=click.Choice(["sync", "async"]), default="async", show_default=True)(f)
    return f


def _spec(mode, dt_us, count) -> WindowSpec:
    return WindowSpec.sync(dt_us) if mode == "sync" else WindowSpec.async_(count)


def _read(path, width, height):
    return read_events(path, SensorGeometry(width, height))


@click.group(context_settings={"help_option_names": ["-h", "--help"], "show_default": True})
def cli():
    """Event-stream denoising, windowing, time surfaces and the per-pixel LSTM autoencoder."""


# ---------------------------------------------------------------- simulate


@cli.command()
@click.option("-o", "--output", type=click.Path(dir_okay=False),
              help="Event file (.csv or binary).")
@click.option("--freq", type=float, default=1.6, help="Dot frequency in Hz.")
@click.option("--duration-ms", type=click.IntRange(0), default=1200)
@click.option("--path", "path_kind", type=click.Choice(["circle", "hsweep", "vsweep", "figure8"]), default="circle")
@click.option("--radius", type=float, default=20.0, help="Orbit radius in pixels.")
@click.option("--sigma", type=float, default=1.5, help="Blob standard deviation in pixels.")
@click.option("--contrast", type=float, default=0.3, help="Log-intensity contrast threshold.")
@click.option("--log-eps", type=float, default=1.99, help="Background offset inside the log.")
@click.option("--phase", type=float, default=0.0, help="Start phase in cycles.")
@click.option("--jitter-us", type=click.IntRange(0), default=0)
@click.option("--noise-rate", type=click.FloatRange(0), default=0.0, help="Shot noise, events/s/pixel.")
@click.option("--seed", type=int, default=0)
@geometry_options
@configurable("output")
def simulate(output, freq, duration_ms, path_kind, radius, sigma, contrast, log_eps, phase, jitter_us,
             noise_rate, seed, width, height):
    """Simulate a moving dot with optional labeled shot noise."""
    duration = duration_ms * 1000
    cfg = DotSceneConfig(SensorGeometry(width, height), radius, None, sigma, freq, duration, contrast,
                         seed=seed, path=path_kind, phase=phase, log_eps=log_eps, jitter=jitter_us)
    stream = simulate_dot(cfg)
    if noise_rate > 0:
        stream = inject_shot_noise(stream, NoiseConfig(noise_rate, duration, seed))
    write_events(stream, output)


# ---------------------------------------------------------------- denoise


@cli.command()
@click.argument("input", required=False, type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", type=click.Path(dir_okay=False))
@click.option("--filter", "kind", type=click.Choice(["memory", "baseline"]), default="memory")
@click.option("--tau-us", type=click.FloatRange(0, min_open=True), default=8000.0, help="Memory decay constant.")
@click.option("--theta", type=click.FloatRange(0), default=1.1, help="Memory score threshold.")
@click.option("--dt-us", type=click.IntRange(1), default=5000, help="Baseline correlation window.")
@click.option("--dx", type=click.IntRange(0), default=1)
@click.option("--dy", type=click.IntRange(0), default=1)
@click.option("--include-center", is_flag=True)
@click.option("--update-policy", type=click.Choice(["all", "passed"]), default="all")
@click.option("--bin-ms", type=click.IntRange(1), default=10, help="Voxel bin for the MSE report.")
@click.option("--report", type=click.Path(dir_okay=False), default=None, help="JSON metrics file.")
@geometry_options
@configurable("input", "output")
def denoise(input, output, kind, tau_us, theta, dt_us, dx, dy, include_center, update_policy, bin_ms,
            report, width, height):
    """Filter background activity. Labeled input also yields retention and MSE metrics."""
    stream = _read(input, width, height)
    if kind == "memory":
        out = dn.memory_filter(stream, dn.MemoryFilterConfig(dx, dy, tau_us, theta, include_center, update_policy))
    else:
        out = dn.baseline_filter(stream, dn.BaselineFilterConfig(dx, dy, dt_us))
    write_events(out, output)
    if report:
        rep = {"nr": dn.noise_ratio(stream, out), "mse": None, "signal_retention": None, "noise_retention": None}
        if stream.is_labeled:
            clean = stream.select(stream.label == SIGNAL)
            rep["mse"] = dn.voxel_mse(clean, out, bin_ms * 1000)
            rep["signal_retention"], rep["noise_retention"] = dn.retention_rates(stream, out)
        _write_json(rep, report)


# ---------------------------------------------------------------- window


@cli.command()
@click.argument("input", required=False, type=click.Path(exists=True, dir_okay=False))
@window_options
@click.option("-o", "--output", default="-", help="Window index JSON (default stdout).")
@click.option("--events-dir", type=click.Path(file_okay=False), default=None,
              help="Also write each window's events here.")
@click.option("--events-format", type=click.Choice(["csv", "bin"]), default="csv")
@geometry_options
@configurable("input")
def window(input, mode, dt_us, count, output, events_dir, events_format, width, height):
    """Split a stream into sync or async windows and index them."""
    stream = _read(input, width, height)
    wins = _spec(mode, dt_us, count).split(stream)
    index = {
        "mode": mode,
        "dt_us": dt_us if mode == "sync" else None,
        "count": count if mode == "async" else None,
        "n_events": len(stream),
        "window_count": len(wins),
        "full_window_count": sum(not w.partial for w in wins),
        "windows": [
            {"index": w.index, "t_start": w.t_start, "t_end": w.t_end, "n_events": len(w), "partial": w.partial}
            for w in wins
        ],
    }
    if events_dir:
        Path(events_dir).mkdir(parents=True, exist_ok=True)
        for w in wins:
            write_events(w.events, Path(events_dir) / f"window_{w.index:05d}.{events_format}")
    _write_json(index, output)


# ---------------------------------------------------------------- surface


def _export(grid, path: Path, fmt: str, normalize: str) -> None:
    if fmt == "npy":
        save_grid_npy(grid, path)
        return
    if grid.channels > 1:
        grid = reduce_channels(grid, "l2")
    if normalize != "none":
        grid = normalize_grid(grid, normalize)
    if fmt == "pgm":
        # PGM needs [0, 1]; maxabs of a signed grid can leave negatives
        grid = normalize_grid(grid, "minmax") if np.any(grid.values < 0) else grid
    export_grid(grid, path, fmt)


@cli.command()
@click.argument("input", required=False, type=click.Path(exists=True, dir_okay=False))
@click.option("--kind", type=click.Choice(KINDS), default="sae")
@window_options
@click.option("-o", "--output-dir", type=click.Path(file_okay=False))
@click.option("--format", "fmt", type=click.Choice(["pgm", "csv"]), default="pgm")
@click.option("--normalize", type=click.Choice(["maxabs", "minmax", "none"]), default="maxabs")
@click.option("--tau-us", type=click.FloatRange(0, min_open=True), default=50_000.0, help="exp surface decay.")
@click.option("--v-threshold", type=click.FloatRange(0, min_open=True), default=2.0, help="snn firing threshold.")
@click.option("--leak-us", type=click.FloatRange(0, min_open=True), default=20_000.0, help="snn leak constant.")
@click.option("--weight", type=float, default=1.0, help="snn input weight.")
@geometry_options
@configurable("input", "output_dir")
def surface(input, kind, mode, dt_us, count, output_dir, fmt, normalize, tau_us, v_threshold, leak_us, weight,
            width, height):
    """Build a hand-crafted surface for every window."""
    stream = _read(input, width, height)
    sk = SurfaceKind(kind, tau_us, v_threshold, leak_us, weight)
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    for w in _spec(mode, dt_us, count).split(stream):
        _export(build_surface(w, sk, stream.geometry), out / f"{kind}_{w.index:05d}.{fmt}", fmt, normalize)


# ---------------------------------------------------------------- train / extract


@cli.command()
@click.argument("inputs", nargs=-1, type=click.Path(exists=True, dir_okay=False))
@window_options
@click.option("-o", "--output", type=click.Path(dir_okay=False), help="Checkpoint path.")
@click.option("--report", type=click.Path(dir_okay=False), default=None, help="Training report JSON.")
@click.option("--epochs", type=click.IntRange(1), default=20)
@click.option("--lr", type=click.FloatRange(0, min_open=True), default=TrainConfig.learning_rate)
@click.option("--batch-size", type=click.IntRange(1), default=TrainConfig.batch_size)
@click.option("--hidden", type=click.IntRange(1), default=TrainConfig.hidden_size)
@click.option("--max-seq-len", type=click.IntRange(1), default=TrainConfig.max_seq_len)
@click.option("--min-seq-len", type=click.IntRange(1), default=TrainConfig.min_seq_len)
@click.option("--clip", type=click.FloatRange(0), default=TrainConfig.grad_clip_norm, help="Global gradient norm cap.")
@click.option("--loss", type=click.Choice(["l2", "l1"]), default="l2")
@click.option("--polarity", is_flag=True, help="Feed polarity as a second input channel.")
@click.option("--carry-cell", is_flag=True, help="Start the decoder from the encoder's final cell state.")
@click.option("--seed", type=int, default=0)
@geometry_options
@configurable("inputs", "output")
def train(inputs, mode, dt_us, count, output, report, epochs, lr, batch_size, hidden, max_seq_len, min_seq_len,
          clip, loss, polarity, carry_cell, seed, width, height):
    """Train the autoencoder on the per-pixel sequences of every window of every input."""
    from .eventlstm import window_sequences

    spec = _spec(mode, dt_us, count)
    data = []
    for path in inputs:
        for w in spec.split(_read(path, width, height)):
            if len(w):
                data.append(window_sequences(w, spec.default_norm, polarity))
    cfg = TrainConfig(lr, epochs, batch_size, clip, seed, min_seq_len, hidden_size=hidden, max_seq_len=max_seq_len,
                      loss=loss, use_polarity=polarity, carry_cell=carry_cell)
    model, rep = train_model(data, cfg)
    save_model(model, output)
    if report:
        _write_json(rep.to_dict(), report)


@cli.command()
@click.argument("input", required=False, type=click.Path(exists=True, dir_okay=False))
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False))
@window_options
@click.option("--norm", type=click.Choice(["default", "window", "event"]), default="default",
              help="Timestamp normalization; default follows the window mode.")
@click.option("-o", "--output-dir", type=click.Path(file_okay=False))
@click.option("--format", "fmt", type=click.Choice(["npy", "pgm", "csv"]), default="npy",
              help="npy keeps every channel; pgm/csv store the per-pixel L2 norm.")
@click.option("--normalize", type=click.Choice(["maxabs", "minmax", "none"]), default="maxabs")
@click.option("--skip-partial", is_flag=True, help="Ignore a trailing partial async window.")
@geometry_options
@configurable("input", "model_path", "output_dir")
def extract(input, model_path, mode, dt_us, count, norm, output_dir, fmt, normalize, skip_partial, width, height):
    """Write the LSTM time surface of every window."""
    stream = _read(input, width, height)
    model = load_model(model_path)
    spec = _spec(mode, dt_us, count)
    nrm = spec.default_norm if norm == "default" else Norm(norm)
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    for w in spec.split(stream):
        if skip_partial and w.partial and mode == "async":
            continue
        _export(extract_grid(w, model, stream.geometry, nrm), out / f"lstmts_{w.index:05d}.{fmt}", fmt, normalize)


# ---------------------------------------------------------------- eval


def _read_features(path) -> list[FeatureVector]:
    """CSV rows of ``label,v1,v2,...``; a first line starting with 'label' is a header."""
    out = []
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip() or (n == 1 and line.startswith("label")):
            continue
        label, *vals = line.split(",")
        try:
            out.append(FeatureVector(np.array([float(v) for v in vals]), f"{path}:{n}", label))
        except ValueError:
            raise ValueError(f"{path} line {n}: non-numeric feature value")
    if not out:
        raise ValueError(f"{path}: no feature rows")
    return out


@cli.command("eval")
@click.option("--train", "train_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Labeled feature CSV used to fit the centroids.")
@click.option("--test", "test_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Labeled feature CSV to score.")
@click.option("--motion", is_flag=True, help="Run the simulated motion task instead of reading features.")
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Checkpoint for --motion.")
@click.option("--dataset", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Motion dataset JSON (default: the shipped one).")
@click.option("--mode", type=click.Choice(["sync", "async"]), default="async", help="Windowing for --motion.")
@click.option("-o", "--output", default="-", help="Metrics JSON (default stdout).")
@click.option("--confusion", type=click.Path(dir_okay=False), default=None, help="Confusion matrix CSV.")
@configurable()
def eval_(train_path, test_path, motion, model_path, dataset, mode, output, confusion):
    """Nearest-centroid classification metrics."""
    if motion:
        if model_path is None:
            raise click.UsageError("--motion needs --model")
        ds = ex.MotionDataset.load(dataset)
        model = load_model(model_path)
        rep = ex.motion_classification(model, ds, modes=(mode,))[mode]
    else:
        if not (train_path and test_path):
            raise click.UsageError("give --train and --test feature files, or --motion")
        cm = fit_centroids(_read_features(train_path))
        test = _read_features(test_path)
        rep = compute_metrics([predict(cm, f) for f in test], [f.label for f in test])
    _write_json(rep.to_dict(), output)
    if confusion:
        _atomic_write(confusion, rep.confusion_csv().encode("ascii"))


# ---------------------------------------------------------------- benchmarks


@cli.command("bench-denoise")
@click.option("--rates", default="1,5,10,20", help="Comma-separated shot-noise rates (events/s/pixel).")
@click.option("--target", type=click.FloatRange(0, 1), default=0.9, help="Signal retention each filter is tuned to.")
@click.option("--freq", type=float, default=1.6)
@click.option("--duration-ms", type=click.IntRange(1), default=1200)
@click.option("--bin-ms", type=click.IntRange(1), default=10)
@click.option("--tau-us", type=click.FloatRange(0, min_open=True), default=8000.0)
@click.option("--seed", type=int, default=0)
@click.option("-o", "--output", default="-")
@configurable()
def bench_denoise(rates, target, freq, duration_ms, bin_ms, tau_us, seed, output):
    """Sweep noise rates; tune both filters to equal signal retention and compare."""
    try:
        rate_list = [float(r) for r in str(rates).split(",") if r.strip()]
    except ValueError:
        raise click.UsageError(f"bad --rates {rates!r}")
    scene = DotSceneConfig(frequency=freq, duration=duration_ms * 1000, seed=seed)
    rows = ex.denoise_sweep(rate_list, scene, target, bin_ms * 1000, seed, dn.MemoryFilterConfig(tau=tau_us))
    _write_json([r.to_dict() for r in rows], output)


@cli.command("bench-energy")
@click.argument("input", required=False, type=click.Path(exists=True, dir_okay=False))
@click.option("--dt-us", type=click.IntRange(1), default=ex.SYNC_DT)
@click.option("--count", type=click.IntRange(1), default=ex.ASYNC_COUNT)
@click.option("--freq", type=float, default=0.17, help="Slow-dot frequency when no input is given.")
@click.option("--cycles", type=click.FloatRange(0, min_open=True), default=3.0)
@click.option("--log-eps", type=float, default=1.7)
@click.option("-o", "--output", default="-")
@geometry_options
@configurable()
def bench_energy(input, dt_us, count, freq, cycles, log_eps, output, width, height):
    """Compare how many windows sync and async modes process."""
    if input:
        stream = _read(input, width, height)
    else:
        stream = simulate_dot(ex.slow_dot_scene(freq, cycles, log_eps, geometry=SensorGeometry(width, height)))
    rep = ex.energy_comparison(stream, dt_us, count)
    _write_json({"rows": rep.rows(), "n_events": rep.n_events, "ratio": rep.ratio}, output)


def main(argv=None) -> int:
    try:
        rv = cli.main(args=argv, prog_name="evlstm", standalone_mode=False)
    except DataError as e:
        click.echo(f"error: {e.format_message()}", err=True)
        return 2
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.ClickException as e:
        e.show()
        return 1
    return rv if isinstance(rv, int) else 0


if __name__ == "__main__":
    sys.exit(main())
