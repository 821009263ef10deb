"""Event data model, stream container and file I/O.

Events are held column-wise in numpy arrays. A stream is considered
immutable once built: the arrays are flagged read-only.
"""
from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

UNLABELED = 0
SIGNAL = 1
NOISE = 2

_LABEL_TO_CHAR = {SIGNAL: "s", NOISE: "n"}
_CHAR_TO_LABEL = {"s": SIGNAL, "n": NOISE}

BINARY_MAGIC = b"EVLSTM01"
_HEADER = struct.Struct("<8sHH")
RECORD_DTYPE = np.dtype(
    [("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "i1"), ("label", "u1")]
)
T_MAX = 2**63 - 1


class EventFormatError(ValueError):
    """Raised for malformed event files or invalid event data."""


class Event(NamedTuple):
    t: int
    x: int
    y: int
    p: int


class LabeledEvent(NamedTuple):
    event: Event
    label: int


@dataclass(frozen=True)
class SensorGeometry:
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"geometry must be at least 1x1, got {self.width}x{self.height}")
        if self.width > 0xFFFF or self.height > 0xFFFF:
            raise ValueError("geometry dimensions must fit in 16 bits")

    @property
    def n_pixels(self) -> int:
        return self.width * self.height


def _frozen(a: np.ndarray, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True).reshape(-1)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class EventStream:
    """Column-wise event container.

    ``label`` is 0 for unlabeled events, 1 for signal and 2 for noise.
    """

    geometry: SensorGeometry
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray
    label: np.ndarray = field(default=None)

    def __post_init__(self):
        n = len(self.t)
        label = self.label if self.label is not None else np.zeros(n, np.uint8)
        object.__setattr__(self, "t", _frozen(self.t, np.int64))
        object.__setattr__(self, "x", _frozen(self.x, np.int64))
        object.__setattr__(self, "y", _frozen(self.y, np.int64))
        object.__setattr__(self, "p", _frozen(self.p, np.int8))
        object.__setattr__(self, "label", _frozen(label, np.uint8))
        if not (len(self.x) == len(self.y) == len(self.p) == len(self.label) == n):
            raise ValueError("event columns must have equal length")

    @classmethod
    def empty(cls, geometry: SensorGeometry) -> "EventStream":
        z = np.zeros(0, np.int64)
        return cls(geometry, z, z, z, z)

    @classmethod
    def from_events(cls, geometry: SensorGeometry, events: Iterable) -> "EventStream":
        """Build a stream from ``Event`` or ``LabeledEvent`` items (order kept)."""
        rows = []
        for ev in events:
            if isinstance(ev, LabeledEvent):
                rows.append((*ev.event, ev.label))
            else:
                rows.append((*ev, UNLABELED))
        if not rows:
            return cls.empty(geometry)
        a = np.array(rows, dtype=np.int64)
        return cls(geometry, a[:, 0], a[:, 1], a[:, 2], a[:, 3], a[:, 4])

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i: int) -> Event:
        return Event(int(self.t[i]), int(self.x[i]), int(self.y[i]), int(self.p[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.geometry == other.geometry
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.p, other.p)
            and np.array_equal(self.label, other.label)
        )

    __hash__ = None

    def __repr__(self) -> str:
        return f"EventStream({self.geometry.width}x{self.geometry.height}, {len(self)} events)"

    @property
    def is_labeled(self) -> bool:
        return len(self) > 0 and bool(np.all(self.label != UNLABELED))

    def labeled_events(self) -> list[LabeledEvent]:
        return [LabeledEvent(self[i], int(self.label[i])) for i in range(len(self))]

    def select(self, index) -> "EventStream":
        """Sub-stream by boolean mask, integer index array or slice."""
        return EventStream(
            self.geometry,
            self.t[index],
            self.x[index],
            self.y[index],
            self.p[index],
            self.label[index],
        )

    def with_labels(self, label: int) -> "EventStream":
        return EventStream(
            self.geometry, self.t, self.x, self.y, self.p, np.full(len(self), label, np.uint8)
        )

    def sort_order(self) -> np.ndarray:
        """Stable permutation sorting by t, then (y, x, p)."""
        return np.lexsort((self.p, self.x, self.y, self.t))

    def sorted(self) -> "EventStream":
        return self.select(self.sort_order())

    @property
    def pixel_index(self) -> np.ndarray:
        return self.y * self.geometry.width + self.x


def concatenate(streams: list[EventStream]) -> EventStream:
    """Concatenate streams sharing a geometry and sort the result."""
    if not streams:
        raise ValueError("nothing to concatenate")
    geometry = streams[0].geometry
    if any(s.geometry != geometry for s in streams):
        raise ValueError("geometry mismatch")
    merged = EventStream(
        geometry,
        np.concatenate([s.t for s in streams]),
        np.concatenate([s.x for s in streams]),
        np.concatenate([s.y for s in streams]),
        np.concatenate([s.p for s in streams]),
        np.concatenate([s.label for s in streams]),
    )
    return merged.sorted()


@dataclass(frozen=True)
class Violation:
    index: int
    kind: str
    message: str


def validate(stream: EventStream) -> list[Violation]:
    """Return one violation per offending event index; empty when valid."""
    out: list[Violation] = []
    g = stream.geometry
    n = len(stream)
    if n == 0:
        return out
    key = np.stack([stream.t, stream.y, stream.x, stream.p.astype(np.int64)], axis=1)
    for i in range(n):
        x, y, t, p = int(stream.x[i]), int(stream.y[i]), int(stream.t[i]), int(stream.p[i])
        if not (0 <= x < g.width and 0 <= y < g.height):
            out.append(Violation(i, "bounds", f"event {i} at ({x},{y}) outside {g.width}x{g.height}"))
        elif t < 0:
            out.append(Violation(i, "timestamp", f"event {i} has negative timestamp {t}"))
        elif p not in (1, -1):
            out.append(Violation(i, "polarity", f"event {i} has polarity {p}"))
        elif i > 0 and tuple(key[i]) < tuple(key[i - 1]):
            if t < int(stream.t[i - 1]):
                out.append(Violation(i, "order", f"event {i} timestamp {t} decreases"))
            else:
                out.append(Violation(i, "order", f"event {i} breaks (y, x, p) tie order"))
        elif int(stream.label[i]) not in (UNLABELED, SIGNAL, NOISE):
            out.append(Violation(i, "label", f"event {i} has label {int(stream.label[i])}"))
    return out


def _check_bounds(stream: EventStream) -> None:
    g = stream.geometry
    bad = (stream.x < 0) | (stream.x >= g.width) | (stream.y < 0) | (stream.y >= g.height)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise EventFormatError(
            f"event {i} at ({stream.x[i]},{stream.y[i]}) outside {g.width}x{g.height}"
        )


def _atomic_write(path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_csv(path, geometry: SensorGeometry) -> EventStream:
    """Read ``t,x,y,p[,label]`` lines.

    A first line whose first field is not numeric is treated as a header.
    The result is sorted (stable for already-sorted input).
    """
    rows = []
    with open(path, "r", encoding="ascii", newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if lineno == 1 and not fields[0].strip().lstrip("-").isdigit():
                continue
            if len(fields) not in (4, 5):
                raise EventFormatError(f"line {lineno}: expected 4 or 5 fields, got {len(fields)}")
            try:
                t, x, y, p = (int(f) for f in fields[:4])
            except ValueError:
                raise EventFormatError(f"line {lineno}: non-integer field in {line!r}") from None
            if p not in (1, -1):
                raise EventFormatError(f"line {lineno}: invalid polarity {p}")
            if not 0 <= t <= T_MAX:
                raise EventFormatError(f"line {lineno}: timestamp {t} out of range")
            if not (0 <= x < geometry.width and 0 <= y < geometry.height):
                raise EventFormatError(
                    f"line {lineno}: coordinate ({x},{y}) outside {geometry.width}x{geometry.height}"
                )
            label = UNLABELED
            if len(fields) == 5:
                ch = fields[4].strip()
                if ch not in _CHAR_TO_LABEL:
                    raise EventFormatError(f"line {lineno}: invalid label {ch!r}")
                label = _CHAR_TO_LABEL[ch]
            rows.append((t, x, y, p, label))
    if not rows:
        return EventStream.empty(geometry)
    a = np.array(rows, dtype=np.int64)
    return EventStream(geometry, a[:, 0], a[:, 1], a[:, 2], a[:, 3], a[:, 4]).sorted()


def format_csv(stream: EventStream) -> str:
    parts = []
    for t, x, y, p, lab in zip(
        stream.t.tolist(), stream.x.tolist(), stream.y.tolist(), stream.p.tolist(), stream.label.tolist()
    ):
        if lab == UNLABELED:
            parts.append(f"{t},{x},{y},{p}\n")
        else:
            parts.append(f"{t},{x},{y},{p},{_LABEL_TO_CHAR[lab]}\n")
    return "".join(parts)


def write_csv(stream: EventStream, path) -> None:
    _atomic_write(path, format_csv(stream).encode("ascii"))


def encode_binary(stream: EventStream) -> bytes:
    _check_bounds(stream)
    rec = np.empty(len(stream), dtype=RECORD_DTYPE)
    rec["t"] = stream.t
    rec["x"] = stream.x
    rec["y"] = stream.y
    rec["p"] = stream.p
    rec["label"] = stream.label
    head = _HEADER.pack(BINARY_MAGIC, stream.geometry.width, stream.geometry.height)
    return head + rec.tobytes()


def decode_binary(data: bytes) -> EventStream:
    if len(data) < _HEADER.size:
        raise EventFormatError("truncated header")
    magic, width, height = _HEADER.unpack_from(data)
    if magic != BINARY_MAGIC:
        raise EventFormatError(f"bad magic {magic!r}")
    body = data[_HEADER.size:]
    if len(body) % RECORD_DTYPE.itemsize:
        raise EventFormatError(
            f"truncated record: {len(body)} payload bytes is not a multiple of {RECORD_DTYPE.itemsize}"
        )
    rec = np.frombuffer(body, dtype=RECORD_DTYPE)
    if np.any(rec["t"] > T_MAX):
        raise EventFormatError("timestamp exceeds 63 bits")
    if np.any((rec["p"] != 1) & (rec["p"] != -1)):
        raise EventFormatError("invalid polarity in record")
    if np.any(rec["label"] > NOISE):
        raise EventFormatError("invalid label in record")
    geometry = SensorGeometry(width, height)
    stream = EventStream(
        geometry,
        rec["t"].astype(np.int64),
        rec["x"],
        rec["y"],
        rec["p"],
        rec["label"],
    )
    _check_bounds(stream)
    return stream


def read_binary(path) -> EventStream:
    return decode_binary(Path(path).read_bytes())


def write_binary(stream: EventStream, path) -> None:
    _atomic_write(path, encode_binary(stream))


def read_events(path, geometry: SensorGeometry | None = None) -> EventStream:
    """Dispatch on extension: ``.csv`` needs a geometry, anything else is binary."""
    if str(path).endswith(".csv"):
        if geometry is None:
            raise ValueError("CSV input requires a sensor geometry")
        return read_csv(path, geometry)
    return read_binary(path)


def write_events(stream: EventStream, path) -> None:
    if str(path).endswith(".csv"):
        write_csv(stream, path)
    else:
        write_binary(stream, path)
