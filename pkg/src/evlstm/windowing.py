"""Synchronous (fixed duration) and asynchronous (fixed event count) windows."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .events import EventStream


class Norm(str, enum.Enum):
    WINDOW_SPAN = "window"
    EVENT_SPAN = "event"


@dataclass(frozen=True)
class WindowSpec:
    mode: str  # "sync" or "async"
    dt: int | None = None  # µs, sync only
    count: int | None = None  # events, async only

    def __post_init__(self):
        if self.mode == "sync":
            if self.dt is None or self.dt < 1:
                raise ValueError("sync windows need dt >= 1 µs")
        elif self.mode == "async":
            if self.count is None or self.count < 1:
                raise ValueError("async windows need count >= 1")
        else:
            raise ValueError(f"unknown window mode {self.mode!r}")

    @classmethod
    def sync(cls, dt: int) -> "WindowSpec":
        return cls("sync", dt=dt)

    @classmethod
    def async_(cls, count: int) -> "WindowSpec":
        return cls("async", count=count)

    @property
    def default_norm(self) -> Norm:
        return Norm.WINDOW_SPAN if self.mode == "sync" else Norm.EVENT_SPAN

    def split(self, stream: EventStream) -> list["Window"]:
        if self.mode == "sync":
            return split_sync(stream, self.dt)
        return split_async(stream, self.count)


@dataclass(frozen=True)
class Window:
    events: EventStream
    t_start: int
    t_end: int  # exclusive
    index: int
    partial: bool = False

    def __len__(self) -> int:
        return len(self.events)

    @property
    def geometry(self):
        return self.events.geometry


def split_sync(stream: EventStream, dt: int) -> list[Window]:
    """Fixed-duration windows anchored at the first event.

    The last window is cut at ``t_last + 1`` and flagged partial when that
    leaves it shorter than ``dt``. Empty interior windows are kept.
    """
    if dt < 1:
        raise ValueError("dt must be >= 1 µs")
    if len(stream) == 0:
        return []
    t_first, t_last = int(stream.t[0]), int(stream.t[-1])
    span = t_last - t_first + 1
    n = -(-span // dt)
    edges = t_first + dt * np.arange(n + 1, dtype=np.int64)
    cuts = np.searchsorted(stream.t, edges, side="left")
    windows = []
    for k in range(n):
        start, end = int(edges[k]), int(edges[k + 1])
        partial = False
        if k == n - 1 and end > t_last + 1:
            end, partial = t_last + 1, True
        windows.append(Window(stream.select(slice(cuts[k], cuts[k + 1])), start, end, k, partial))
    return windows


def split_async(stream: EventStream, count: int) -> list[Window]:
    """Runs of exactly ``count`` events; a shorter remainder becomes a partial window."""
    if count < 1:
        raise ValueError("count must be >= 1")
    windows = []
    for k, lo in enumerate(range(0, len(stream), count)):
        part = stream.select(slice(lo, lo + count))
        windows.append(Window(part, int(part.t[0]), int(part.t[-1]) + 1, k, len(part) < count))
    return windows


def normalized_times(window: Window, norm: Norm | str) -> np.ndarray:
    """Window event timestamps mapped into [0, 1]."""
    norm = Norm(norm)
    t = window.events.t.astype(np.float64)
    if norm is Norm.WINDOW_SPAN:
        lo, span = float(window.t_start), float(window.t_end - window.t_start)
    else:
        lo, span = t[0], t[-1] - t[0]
    if span <= 0:
        return np.zeros_like(t)
    return np.clip((t - lo) / span, 0.0, 1.0)


def per_pixel_sequences(window: Window, norm: Norm | str = Norm.WINDOW_SPAN) -> dict[tuple[int, int], np.ndarray]:
    """Group normalized timestamps by pixel, keeping event order within a pixel."""
    if len(window) == 0:
        raise ValueError("per_pixel_sequences needs a non-empty window")
    tn = normalized_times(window, norm)
    pix = window.events.pixel_index
    order = np.argsort(pix, kind="stable")
    pix_sorted = pix[order]
    uniq, starts = np.unique(pix_sorted, return_index=True)
    bounds = np.append(starts, len(pix_sorted))
    width = window.geometry.width
    out = {}
    for q, a, b in zip(uniq.tolist(), bounds[:-1].tolist(), bounds[1:].tolist()):
        out[(q % width, q // width)] = tn[order[a:b]]
    return out
