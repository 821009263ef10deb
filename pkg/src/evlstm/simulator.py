"""Synthetic labeled event streams: a Gaussian dot on a path, plus shot noise.

Events follow the usual intensity-threshold sensor model. Each pixel keeps a
reference log intensity; whenever the sampled log intensity moves ``C`` away
from it, an event is emitted at the linearly interpolated crossing time and
the reference steps by ``C``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .events import NOISE, SIGNAL, EventStream, SensorGeometry, concatenate

PATHS = ("circle", "hsweep", "vsweep", "figure8")


@dataclass(frozen=True)
class DotSceneConfig:
    geometry: SensorGeometry = field(default_factory=lambda: SensorGeometry(64, 64))
    orbit_radius: float = 20.0
    orbit_center: tuple[float, float] | None = None  # defaults to sensor centre
    blob_sigma: float = 1.5
    frequency: float = 1.6  # Hz
    duration: int = 1_200_000  # µs
    contrast_threshold: float = 0.3
    sim_step: int = 500  # µs
    seed: int = 0
    path: str = "circle"
    phase: float = 0.0  # in cycles
    log_eps: float = 1.99  # background offset inside the log; sets events per cycle
    jitter: int = 0  # µs, uniform sub-step timestamp jitter; 0 disables

    def __post_init__(self):
        if self.frequency < 0:
            raise ValueError("frequency must be >= 0")
        if self.sim_step < 1:
            raise ValueError("sim_step must be >= 1 µs")
        if self.contrast_threshold <= 0:
            raise ValueError("contrast_threshold must be > 0")
        if self.duration < 0:
            raise ValueError("duration must be >= 0")
        if self.blob_sigma <= 0:
            raise ValueError("blob_sigma must be > 0")
        if self.log_eps <= 0:
            raise ValueError("log_eps must be > 0")
        if self.path not in PATHS:
            raise ValueError(f"unknown path {self.path!r}; expected one of {PATHS}")

    @property
    def center(self) -> tuple[float, float]:
        if self.orbit_center is not None:
            return self.orbit_center
        g = self.geometry
        return ((g.width - 1) / 2.0, (g.height - 1) / 2.0)


@dataclass(frozen=True)
class NoiseConfig:
    rate: float = 5.0  # events / s / pixel
    duration: int = 1_000_000  # µs
    seed: int = 0

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError("noise rate must be >= 0")
        if self.duration < 0:
            raise ValueError("duration must be >= 0")


class SceneError(ValueError):
    pass


def dot_position(cfg: DotSceneConfig, t_us):
    """Dot centre at time(s) ``t_us``."""
    u = cfg.frequency * np.asarray(t_us, dtype=np.float64) * 1e-6 + cfg.phase
    cx, cy = cfg.center
    r = cfg.orbit_radius
    a = 2.0 * np.pi * u
    if cfg.path == "circle":
        return cx + r * np.cos(a), cy + r * np.sin(a)
    if cfg.path == "hsweep":
        return cx + r * np.sin(a), cy + 0.0 * a
    if cfg.path == "vsweep":
        return cx + 0.0 * a, cy + r * np.sin(a)
    return cx + r * np.sin(a), cy + 0.5 * r * np.sin(2.0 * a)


def _path_extent(cfg: DotSceneConfig) -> tuple[float, float, float, float]:
    cx, cy = cfg.center
    r = cfg.orbit_radius
    rx, ry = {"circle": (r, r), "hsweep": (r, 0.0), "vsweep": (0.0, r), "figure8": (r, 0.5 * r)}[cfg.path]
    return cx - rx, cx + rx, cy - ry, cy + ry


def _check_fits(cfg: DotSceneConfig) -> None:
    g = cfg.geometry
    x0, x1, y0, y1 = _path_extent(cfg)
    m = 3.0 * cfg.blob_sigma
    if x0 - m < 0 or y0 - m < 0 or x1 + m > g.width - 1 or y1 + m > g.height - 1:
        raise SceneError(
            f"blob (path extent x[{x0:.1f},{x1:.1f}] y[{y0:.1f},{y1:.1f}], 3 sigma={m:.1f}) "
            f"does not fit a {g.width}x{g.height} sensor"
        )


def _active_pixels(cfg: DotSceneConfig) -> tuple[np.ndarray, np.ndarray]:
    # Pixels farther than this from the path can never accumulate a full threshold step.
    g = cfg.geometry
    floor_i = cfg.log_eps * math.expm1(cfg.contrast_threshold)
    if floor_i >= 1.0:
        reach = 0.0
    else:
        reach = cfg.blob_sigma * math.sqrt(2.0 * math.log(1.0 / floor_i))
    reach += 1.0
    x0, x1, y0, y1 = _path_extent(cfg)
    xs = np.arange(max(0, math.floor(x0 - reach)), min(g.width - 1, math.ceil(x1 + reach)) + 1)
    ys = np.arange(max(0, math.floor(y0 - reach)), min(g.height - 1, math.ceil(y1 + reach)) + 1)
    gx, gy = np.meshgrid(xs, ys)
    return gx.ravel().astype(np.int64), gy.ravel().astype(np.int64)


def _log_intensity(cfg, px, py, t_us):
    cx, cy = dot_position(cfg, t_us)
    d2 = (px - cx) ** 2 + (py - cy) ** 2
    return np.log(cfg.log_eps + np.exp(-d2 / (2.0 * cfg.blob_sigma**2)))


def simulate_dot(cfg: DotSceneConfig) -> EventStream:
    """Render the moving dot into a sorted stream of Signal-labeled events."""
    _check_fits(cfg)
    g = cfg.geometry
    if cfg.frequency == 0 or cfg.duration == 0:
        return EventStream.empty(g)
    px, py = _active_pixels(cfg)
    C = cfg.contrast_threshold
    # Returning exactly to the background level must count as a full step.
    C_test = C * (1.0 - 1e-9)
    step = cfg.sim_step
    ref = _log_intensity(cfg, px, py, 0.0)
    prev = ref.copy()
    chunks_t, chunks_i, chunks_p = [], [], []
    n_steps = cfg.duration // step
    for k in range(1, n_steps + 1):
        t_prev = (k - 1) * step
        cur = _log_intensity(cfg, px, py, k * step)
        delta = cur - prev
        while True:
            up = cur - ref >= C_test
            down = ref - cur >= C_test
            fire = np.flatnonzero(up | down)
            if fire.size == 0:
                break
            pol = np.where(up[fire], 1, -1)
            level = ref[fire] + pol * C
            frac = np.clip((level - prev[fire]) / delta[fire], 0.0, 1.0)
            chunks_t.append(t_prev + np.floor(frac * step).astype(np.int64))
            chunks_i.append(fire)
            chunks_p.append(pol)
            ref[fire] = level
        prev = cur
    if not chunks_t:
        return EventStream.empty(g)
    t = np.concatenate(chunks_t)
    idx = np.concatenate(chunks_i)
    p = np.concatenate(chunks_p)
    if cfg.jitter > 0:
        rng = np.random.default_rng(cfg.seed)
        t = np.clip(t + rng.integers(-cfg.jitter, cfg.jitter + 1, size=t.size), 0, cfg.duration)
    stream = EventStream(g, t, px[idx], py[idx], p, np.full(t.size, SIGNAL, np.uint8))
    return stream.sorted()


def simulate_noise_only(geometry: SensorGeometry, cfg: NoiseConfig) -> EventStream:
    """Independent per-pixel Poisson shot noise, labeled Noise.

    Pixel ``i`` draws from its own generator seeded by ``(seed, i)``, so the
    result does not depend on iteration order.
    """
    if cfg.rate == 0 or cfg.duration == 0:
        return EventStream.empty(geometry)
    mean = cfg.rate * cfg.duration * 1e-6
    ts, idxs, ps = [], [], []
    for i in range(geometry.n_pixels):
        rng = np.random.default_rng([cfg.seed, i])
        n = int(rng.poisson(mean))
        if n == 0:
            continue
        ts.append(rng.integers(0, cfg.duration + 1, size=n))
        ps.append(rng.integers(0, 2, size=n) * 2 - 1)
        idxs.append(np.full(n, i, np.int64))
    if not ts:
        return EventStream.empty(geometry)
    idx = np.concatenate(idxs)
    t = np.concatenate(ts)
    stream = EventStream(
        geometry,
        t,
        idx % geometry.width,
        idx // geometry.width,
        np.concatenate(ps),
        np.full(t.size, NOISE, np.uint8),
    )
    return stream.sorted()


def inject_shot_noise(stream: EventStream, cfg: NoiseConfig) -> EventStream:
    """Merge Poisson shot noise into ``stream``; original labels are kept."""
    if cfg.rate == 0:
        return stream
    noise = simulate_noise_only(stream.geometry, cfg)
    return concatenate([stream, noise])
