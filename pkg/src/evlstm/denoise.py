"""Background-activity filters and the metrics used to compare them.

``memory_filter`` accumulates exponentially decaying evidence from every
pixel in the neighborhood. ``baseline_filter`` is the classic correlation
filter that only looks at the most recent neighbor timestamp.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import _backend
from .events import NOISE, SIGNAL, UNLABELED, EventStream


class UpdatePolicy(str, enum.Enum):
    UPDATE_ALL = "all"
    UPDATE_PASSED_ONLY = "passed"


@dataclass(frozen=True)
class MemoryFilterConfig:
    dx: int = 1
    dy: int = 1
    tau: float = 8000.0  # µs
    theta: float = 1.1
    include_center: bool = False
    update_policy: UpdatePolicy = UpdatePolicy.UPDATE_ALL

    def __post_init__(self):
        if self.dx < 0 or self.dy < 0:
            raise ValueError("neighborhood half-sizes must be >= 0")
        if self.tau <= 0:
            raise ValueError("tau must be > 0")
        if self.theta < 0:
            raise ValueError("theta must be >= 0")
        object.__setattr__(self, "update_policy", UpdatePolicy(self.update_policy))


@dataclass(frozen=True)
class BaselineFilterConfig:
    dx: int = 1
    dy: int = 1
    dT: int = 5000  # µs

    def __post_init__(self):
        if self.dx < 0 or self.dy < 0:
            raise ValueError("neighborhood half-sizes must be >= 0")
        if self.dT <= 0:
            raise ValueError("dT must be > 0")


class UnsortedStreamError(ValueError):
    pass


def _require_sorted(stream: EventStream) -> None:
    if len(stream) > 1 and np.any(np.diff(stream.t) < 0):
        i = int(np.flatnonzero(np.diff(stream.t) < 0)[0]) + 1
        raise UnsortedStreamError(f"stream not sorted by time at index {i}")


def memory_scores(stream: EventStream, cfg: MemoryFilterConfig, backend: str | None = None):
    """Per-event keep mask and neighborhood score.

    Under UpdateAll the score of an event does not depend on ``theta``, so a
    single pass serves a whole threshold sweep.
    """
    _require_sorted(stream)
    k = _backend.get_kernels(backend)
    g = stream.geometry
    return k.memory_filter(
        np.ascontiguousarray(stream.t),
        np.ascontiguousarray(stream.x),
        np.ascontiguousarray(stream.y),
        g.width,
        g.height,
        int(cfg.dx),
        int(cfg.dy),
        float(cfg.tau),
        float(cfg.theta),
        bool(cfg.include_center),
        cfg.update_policy is UpdatePolicy.UPDATE_ALL,
    )


def memory_filter(stream: EventStream, cfg: MemoryFilterConfig | None = None, backend: str | None = None) -> EventStream:
    cfg = cfg or MemoryFilterConfig()
    keep, _ = memory_scores(stream, cfg, backend)
    return stream.select(keep)


def baseline_mask(stream: EventStream, cfg: BaselineFilterConfig, backend: str | None = None) -> np.ndarray:
    _require_sorted(stream)
    k = _backend.get_kernels(backend)
    g = stream.geometry
    return k.baseline_filter(
        np.ascontiguousarray(stream.t),
        np.ascontiguousarray(stream.x),
        np.ascontiguousarray(stream.y),
        g.width,
        g.height,
        int(cfg.dx),
        int(cfg.dy),
        int(cfg.dT),
    )


def baseline_filter(stream: EventStream, cfg: BaselineFilterConfig | None = None, backend: str | None = None) -> EventStream:
    cfg = cfg or BaselineFilterConfig()
    return stream.select(baseline_mask(stream, cfg, backend))


def noise_ratio(input: EventStream, output: EventStream) -> float:
    if len(input) == 0:
        return 0.0
    return len(output) / len(input)


def _voxel_index(stream: EventStream, t0: int, bin_us: int) -> np.ndarray:
    g = stream.geometry
    b = (stream.t - t0) // bin_us
    return (b * g.height + stream.y) * g.width + stream.x


def voxel_mse(reference: EventStream, candidate: EventStream, bin_us: int) -> float:
    """Mean squared per-(x, y, time-bin) count difference over the joint time span."""
    if bin_us <= 0:
        raise ValueError("bin must be > 0")
    if reference.geometry != candidate.geometry:
        raise ValueError("geometry mismatch")
    if len(reference) == 0 and len(candidate) == 0:
        return 0.0
    g = reference.geometry
    ts = np.concatenate([reference.t, candidate.t])
    t0, t1 = int(ts.min()), int(ts.max())
    n_bins = (t1 - t0) // bin_us + 1
    n_vox = n_bins * g.n_pixels
    ref_idx = _voxel_index(reference, t0, bin_us)
    cand_idx = _voxel_index(candidate, t0, bin_us)
    # Only touched voxels contribute; sparse counting keeps long recordings cheap.
    keys, inv = np.unique(np.concatenate([ref_idx, cand_idx]), return_inverse=True)
    diff = np.zeros(len(keys), np.int64)
    np.add.at(diff, inv[: len(ref_idx)], 1)
    np.add.at(diff, inv[len(ref_idx):], -1)
    return float(np.sum(diff.astype(np.float64) ** 2) / n_vox)


def retention_rates(labeled_input: EventStream, output: EventStream) -> tuple[float, float]:
    """Fraction of Signal and of Noise events that survived filtering.

    A class absent from the input gets a rate of 0.
    """
    if len(labeled_input) == 0 or np.any(labeled_input.label == UNLABELED):
        raise ValueError("retention_rates needs a fully labeled input stream")
    rates = []
    for lab in (SIGNAL, NOISE):
        total = int(np.sum(labeled_input.label == lab))
        kept = int(np.sum(output.label == lab))
        rates.append(kept / total if total else 0.0)
    return rates[0], rates[1]
