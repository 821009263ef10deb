"""Dense 2D grids and the hand-crafted surfaces built from a window.

Grids store values as ``(height, width, channels)`` arrays.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _backend
from .events import SensorGeometry, _atomic_write
from .windowing import Norm, Window, normalized_times


@dataclass(frozen=True, eq=False)
class Grid:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 2:
            v = v[:, :, None]
        if v.ndim != 3 or v.shape[2] < 1:
            raise ValueError(f"grid values must be (height, width, channels), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid values must be finite")
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, geometry: SensorGeometry, channels: int = 1) -> "Grid":
        return cls(np.zeros((geometry.height, geometry.width, channels)))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Grid):
            return NotImplemented
        return self.values.shape == other.values.shape and np.array_equal(self.values, other.values)

    __hash__ = None


KINDS = ("sae", "count", "on", "off", "exp", "snn")


@dataclass(frozen=True)
class SurfaceKind:
    """Which surface to build; ``tau`` and the LIF fields only matter for exp/snn."""

    name: str
    tau: float = 50_000.0  # µs, exp
    v_threshold: float = 2.0  # snn
    leak_tau: float = 20_000.0  # µs, snn
    w: float = 1.0  # snn

    def __post_init__(self):
        if self.name not in KINDS:
            raise ValueError(f"unknown surface kind {self.name!r}; expected one of {KINDS}")
        if self.tau <= 0 or self.leak_tau <= 0:
            raise ValueError("time constants must be > 0")
        if self.v_threshold <= 0:
            raise ValueError("v_threshold must be > 0")


def _last_per_pixel(pix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # index of each pixel's final occurrence in a time-sorted window
    rev = pix[::-1]
    uniq, first_in_rev = np.unique(rev, return_index=True)
    return uniq, len(pix) - 1 - first_in_rev


def build_surface(window: Window, kind: SurfaceKind | str, geometry: SensorGeometry | None = None,
                  backend: str | None = None) -> Grid:
    if isinstance(kind, str):
        kind = SurfaceKind(kind)
    geometry = geometry or window.geometry
    flat = np.zeros(geometry.n_pixels)
    ev = window.events
    if len(ev) == 0:
        return Grid(flat.reshape(geometry.height, geometry.width))
    if np.any(ev.x >= geometry.width) or np.any(ev.y >= geometry.height):
        raise ValueError("window events fall outside the target geometry")
    pix = ev.y * geometry.width + ev.x
    if kind.name == "count":
        flat += np.bincount(pix, minlength=geometry.n_pixels)
    elif kind.name == "on":
        flat += np.bincount(pix[ev.p > 0], minlength=geometry.n_pixels)
    elif kind.name == "off":
        flat += np.bincount(pix[ev.p < 0], minlength=geometry.n_pixels)
    elif kind.name == "sae":
        q, last = _last_per_pixel(pix)
        flat[q] = normalized_times(window, Norm.WINDOW_SPAN)[last]
    elif kind.name == "exp":
        q, last = _last_per_pixel(pix)
        # libm exp, matching the compiled kernels bit for bit
        age = (window.t_end - ev.t[last]).tolist()
        flat[q] = [math.exp(-a / kind.tau) for a in age]
    else:
        k = _backend.get_kernels(backend)
        flat += k.lif_spike_count(
            np.ascontiguousarray(ev.t), np.ascontiguousarray(pix), geometry.n_pixels,
            float(kind.w), float(kind.v_threshold), float(kind.leak_tau),
        )
    return Grid(flat.reshape(geometry.height, geometry.width))


def normalize_grid(grid: Grid, mode: str = "maxabs") -> Grid:
    v = grid.values
    if mode == "maxabs":
        m = np.max(np.abs(v)) if v.size else 0.0
        return Grid(v / m) if m > 0 else Grid(v.copy())
    if mode == "minmax":
        lo, hi = v.min(), v.max()
        if hi == lo:
            return Grid(np.zeros_like(v))
        return Grid((v - lo) / (hi - lo))
    raise ValueError(f"unknown normalization {mode!r}")


def reduce_channels(grid: Grid, how: str = "l2") -> Grid:
    """Collapse channels to one: L2 norm, mean, or a single channel index."""
    v = grid.values
    if how == "l2":
        return Grid(np.sqrt(np.sum(v * v, axis=2)))
    if how == "mean":
        return Grid(v.mean(axis=2))
    return Grid(v[:, :, int(how)])


def encode_pgm(grid: Grid) -> bytes:
    if grid.channels != 1:
        raise ValueError("PGM export needs a single-channel grid; reduce channels first")
    v = grid.values[:, :, 0]
    if np.any(v < 0) or np.any(v > 1):
        raise ValueError("PGM export needs values in [0, 1]")
    pixels = np.round(v * 65535.0).astype(">u2")
    return f"P5\n{grid.width} {grid.height}\n65535\n".encode("ascii") + pixels.tobytes()


def decode_pgm(data: bytes) -> Grid:
    parts = data.split(maxsplit=4)
    if len(parts) < 4 or parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    width, height, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 65535:
        raise ValueError("only 16-bit PGM is supported")
    body = data[len(data) - width * height * 2:]
    v = np.frombuffer(body, dtype=">u2").reshape(height, width).astype(np.float64) / 65535.0
    return Grid(v)


def format_grid_csv(grid: Grid) -> str:
    if grid.channels != 1:
        raise ValueError("CSV export needs a single-channel grid; reduce channels first")
    rows = grid.values[:, :, 0].tolist()
    return "".join(",".join(repr(float(v)) for v in row) + "\n" for row in rows)


def export_grid(grid: Grid, path, format: str | None = None) -> None:
    """Write a single-channel grid as 16-bit binary PGM or CSV (one row per y)."""
    fmt = (format or Path(path).suffix.lstrip(".")).lower()
    if fmt == "pgm":
        _atomic_write(path, encode_pgm(grid))
    elif fmt == "csv":
        _atomic_write(path, format_grid_csv(grid).encode("ascii"))
    else:
        raise ValueError(f"unknown grid format {fmt!r}")


def read_grid_csv(path) -> Grid:
    rows = [
        [float(v) for v in line.split(",")]
        for line in Path(path).read_text().splitlines()
        if line.strip()
    ]
    return Grid(np.array(rows, dtype=np.float64))


def save_grid_npy(grid: Grid, path) -> None:
    """Multi-channel grids (e.g. LSTM-TS) are stored losslessly as .npy."""
    buf = io.BytesIO()
    np.save(buf, grid.values, allow_pickle=False)
    _atomic_write(path, buf.getvalue())
