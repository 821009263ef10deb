"""Desk-scale experiments built from the library pieces.

Each function here is one end-to-end measurement on simulated data: window
counts for the energy comparison, denoiser sweeps, speed invariance of the
LSTM time surface, and a small motion classification task. The CLI bench
commands and the acceptance tests call these directly.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .denoise import (
    BaselineFilterConfig,
    MemoryFilterConfig,
    UpdatePolicy,
    baseline_mask,
    memory_scores,
    noise_ratio,
    retention_rates,
    voxel_mse,
)
from .evalkit import FeatureVector, compute_metrics, fit_centroids, invariance_score, pool_features, predict
from .eventlstm import AutoencoderModel, TrainConfig, TrainingReport, extract_grid, train
from .events import SIGNAL, EventStream
from .simulator import DotSceneConfig, NoiseConfig, inject_shot_noise, simulate_dot, simulate_noise_only
from .windowing import WindowSpec, per_pixel_sequences

SYNC_DT = 1_200_000  # µs
ASYNC_COUNT = 1100  # events


# ---------------------------------------------------------------- energy


@dataclass(frozen=True)
class EnergyReport:
    n_events: int
    sync_windows: int
    async_windows: int  # full windows only
    async_partial: int  # events in a trailing partial window, 0 if none
    ratio: float

    def rows(self) -> list[dict]:
        # mean events per processed window
        n_sync = max(self.sync_windows, 1)
        n_async = max(self.async_windows, 1)
        return [
            {"mode": "sync", "window_count": self.sync_windows, "events_per_window": self.n_events / n_sync},
            {"mode": "async", "window_count": self.async_windows,
             "events_per_window": (self.n_events - self.async_partial) / n_async},
        ]


def slow_dot_scene(frequency: float = 0.17, cycles: float = 3.0, log_eps: float = 1.7, **kw) -> DotSceneConfig:
    """Slow orbiting dot; ``log_eps`` 1.7 gives about 2200 events over 3 cycles at 64x64."""
    return DotSceneConfig(frequency=frequency, duration=int(cycles / frequency * 1e6), log_eps=log_eps, **kw)


def energy_comparison(stream: EventStream, dt: int = SYNC_DT, count: int = ASYNC_COUNT) -> EnergyReport:
    """Windows processed by each mode. A trailing partial async window never fills, so it is not counted."""
    sync = WindowSpec.sync(dt).split(stream)
    asyn = WindowSpec.async_(count).split(stream)
    full = [w for w in asyn if not w.partial]
    partial = len(asyn[-1]) if asyn and asyn[-1].partial else 0
    ratio = len(sync) / len(full) if full else math.inf
    return EnergyReport(len(stream), len(sync), len(full), partial, ratio)


# ---------------------------------------------------------------- denoising


@dataclass(frozen=True)
class DenoiseResult:
    rate: float
    filter: str
    setting: float  # theta for the memory filter, dT for the baseline
    mse: float
    nr: float
    signal_retention: float
    noise_retention: float

    def to_dict(self) -> dict:
        return asdict(self)


def tune_memory_threshold(stream: EventStream, target: float, cfg: MemoryFilterConfig | None = None):
    """Largest theta keeping at least ``target`` of the signal events. Returns (theta, keep)."""
    cfg = cfg or MemoryFilterConfig()
    if UpdatePolicy(cfg.update_policy) is not UpdatePolicy.UPDATE_ALL:
        raise ValueError("threshold tuning needs the update-all policy (scores independent of theta)")
    _, score = memory_scores(stream, MemoryFilterConfig(cfg.dx, cfg.dy, cfg.tau, 0.0, cfg.include_center))
    sig = np.sort(score[stream.label == SIGNAL])[::-1]
    if len(sig) == 0:
        raise ValueError("stream has no signal events")
    theta = float(sig[max(math.ceil(target * len(sig)) - 1, 0)])
    return theta, score >= theta


def tune_baseline_window(stream: EventStream, target: float, cfg: BaselineFilterConfig | None = None):
    """Smallest dT keeping at least ``target`` of the signal events. Returns (dT, keep)."""
    cfg = cfg or BaselineFilterConfig()
    sig = stream.label == SIGNAL
    if not sig.any():
        raise ValueError("stream has no signal events")

    def mask(dT):
        return baseline_mask(stream, BaselineFilterConfig(cfg.dx, cfg.dy, dT))

    lo, hi = 1, max(int(stream.t[-1] - stream.t[0]), 1)
    if mask(hi)[sig].mean() < target:
        return hi, mask(hi)
    while lo < hi:
        mid = (lo + hi) // 2
        if mask(mid)[sig].mean() >= target:
            hi = mid
        else:
            lo = mid + 1
    return lo, mask(lo)


def denoise_sweep(rates: Sequence[float] = (1, 5, 10, 20), scene: DotSceneConfig | None = None,
                  target: float = 0.9, bin_us: int = 10_000, seed: int = 0,
                  memory: MemoryFilterConfig | None = None,
                  baseline: BaselineFilterConfig | None = None) -> list[DenoiseResult]:
    """Both filters tuned to the same signal retention at each noise rate."""
    scene = scene or DotSceneConfig()
    clean = simulate_dot(scene)
    rows = []
    for k, rate in enumerate(rates):
        noisy = inject_shot_noise(clean, NoiseConfig(rate=rate, duration=scene.duration, seed=seed + k))
        for name, tune in (("memory", lambda s: tune_memory_threshold(s, target, memory)),
                           ("baseline", lambda s: tune_baseline_window(s, target, baseline))):
            setting, keep = tune(noisy)
            out = noisy.select(keep)
            sr, nr_ = retention_rates(noisy, out)
            rows.append(DenoiseResult(float(rate), name, float(setting), voxel_mse(clean, out, bin_us),
                                      noise_ratio(noisy, out), sr, nr_))
    return rows


def noise_only_ratios(rate: float = 5.0, duration: int = 5_000_000, seed: int = 0, geometry=None,
                      memory: MemoryFilterConfig | None = None,
                      baseline: BaselineFilterConfig | None = None) -> dict[str, float]:
    """Fraction of a pure shot-noise stream each filter lets through at its defaults."""
    geometry = geometry or DotSceneConfig().geometry
    noise = simulate_noise_only(geometry, NoiseConfig(rate=rate, duration=duration, seed=seed))
    keep_m, _ = memory_scores(noise, memory or MemoryFilterConfig())
    keep_b = baseline_mask(noise, baseline or BaselineFilterConfig())
    return {"n_events": len(noise), "memory": float(keep_m.mean()), "baseline": float(keep_b.mean())}


# ---------------------------------------------------------------- LSTM time surfaces


def training_corpus(frequencies: Sequence[float] = (0.8, 1.6, 2.4, 3.2),
                    paths: Sequence[str] = ("circle", "figure8"), duration: int = 1_200_000,
                    dt: int = SYNC_DT, count: int = ASYNC_COUNT) -> list[dict]:
    """Unlabeled per-pixel sequences from dot scenes, windowed both ways."""
    corpus = []
    for f in frequencies:
        for path in paths:
            stream = simulate_dot(DotSceneConfig(frequency=f, duration=duration, path=path))
            for spec in (WindowSpec.sync(dt), WindowSpec.async_(count)):
                corpus += [per_pixel_sequences(w, spec.default_norm) for w in spec.split(stream) if len(w)]
    return corpus


def train_reference_model(epochs: int = 20, seed: int = 0, **overrides) -> tuple[AutoencoderModel, TrainingReport]:
    """The model used by the invariance and classification experiments."""
    return train(training_corpus(), TrainConfig(epochs=epochs, seed=seed, **overrides))


def window_grids(stream: EventStream, spec: WindowSpec, model: AutoencoderModel) -> list:
    """LSTM-TS grids for the windows that would be processed (non-empty, full async)."""
    wins = [w for w in spec.split(stream) if len(w) and not (spec.mode == "async" and w.partial)]
    return [extract_grid(w, model, norm=spec.default_norm) for w in wins]


def speed_invariance(model: AutoencoderModel, frequencies: tuple[float, float] = (1.6, 3.2),
                     duration: int = 1_200_000, dt: int = SYNC_DT, count: int = ASYNC_COUNT) -> dict[str, float]:
    scenes = [simulate_dot(DotSceneConfig(frequency=f, duration=duration)) for f in frequencies]
    out = {}
    for mode, spec in (("sync", WindowSpec.sync(dt)), ("async", WindowSpec.async_(count))):
        a, b = (window_grids(s, spec, model) for s in scenes)
        out[mode] = invariance_score(a, b)
    out["gap"] = out["async"] - out["sync"]
    return out


# ---------------------------------------------------------------- motion classification


@dataclass(frozen=True)
class MotionDataset:
    classes: tuple[str, ...] = ("circle", "hsweep", "vsweep", "figure8")
    speeds_hz: tuple[float, float] = (0.8, 1.6)
    seeds: int = 10
    duration_us: int = 2_500_000
    jitter_us: int = 200
    sync_dt_us: int = 600_000
    async_count: int = 500
    pool_factor: int = 8

    @classmethod
    def from_dict(cls, d: dict) -> "MotionDataset":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown dataset keys: {sorted(unknown)}")
        d = dict(d)
        for k in ("classes", "speeds_hz"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)

    @classmethod
    def load(cls, path=None) -> "MotionDataset":
        if path is None:
            text = resources.files("evlstm").joinpath("data/motion_dataset.json").read_text()
        else:
            text = Path(path).read_text()
        return cls.from_dict(json.loads(text))

    def recordings(self, speed: float):
        """(class, stream) for every seed; the seed varies the start phase and timestamp jitter."""
        for seed in range(self.seeds):
            for k, name in enumerate(self.classes):
                rng = np.random.default_rng([seed, k])
                cfg = DotSceneConfig(frequency=speed, duration=self.duration_us, path=name,
                                     phase=float(rng.random()), seed=seed, jitter=self.jitter_us)
                yield name, simulate_dot(cfg)


def motion_features(dataset: MotionDataset, model: AutoencoderModel, speed: float, mode: str) -> list[FeatureVector]:
    spec = WindowSpec.sync(dataset.sync_dt_us) if mode == "sync" else WindowSpec.async_(dataset.async_count)
    out = []
    for name, stream in dataset.recordings(speed):
        for k, g in enumerate(window_grids(stream, spec, model)):
            out.append(pool_features(g, dataset.pool_factor, source=f"{name}@{speed}#{k}", label=name))
    return out


def motion_classification(model: AutoencoderModel, dataset: MotionDataset | None = None,
                          modes: Sequence[str] = ("sync", "async")):
    """Nearest-centroid accuracy with the speed held out: train on one speed, test on the other, both ways.

    Returns {mode: MetricsReport} over the pooled predictions of both folds.
    """
    dataset = dataset or MotionDataset.load()
    s0, s1 = dataset.speeds_hz
    reports = {}
    for mode in modes:
        feats = {s: motion_features(dataset, model, s, mode) for s in (s0, s1)}
        preds, labels = [], []
        for tr, te in ((s0, s1), (s1, s0)):
            cm = fit_centroids(feats[tr])
            preds += [predict(cm, f) for f in feats[te]]
            labels += [f.label for f in feats[te]]
        reports[mode] = compute_metrics(preds, labels)
    return reports


# ---------------------------------------------------------------- training sanity


def ramp_corpus(n: int = 200, seed: int = 0, min_len: int = 2, max_len: int = 16) -> list[np.ndarray]:
    """Monotone ramps in [0, 1]: random start, slope and length."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        k = int(rng.integers(min_len, max_len + 1))
        a = rng.uniform(0.0, 0.5)
        out.append(np.linspace(a, a + rng.uniform(0.1, 0.5), k))
    return out
