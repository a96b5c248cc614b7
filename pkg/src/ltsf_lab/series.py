"""Series ingestion, splitting, standardization and windowing.

All functions here are pure: frames are never mutated, and every derived
frame carries the absolute row ``offset`` of its first row in the source
series so window origins stay traceable.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

SIGMA_FLOOR = 1e-8


class DataError(ValueError):
    """Base class for ingestion and windowing failures."""


class MissingFileError(DataError, FileNotFoundError):
    pass


class EmptyFileError(DataError):
    pass


class NonNumericError(DataError):
    pass


class MissingValueError(DataError):
    pass


class NonMonotoneTimestampError(DataError):
    pass


class SegmentTooShortError(DataError):
    pass


@dataclass(frozen=True)
class SeriesFrame:
    name: str
    timestamps: tuple[str, ...]
    values: np.ndarray  # (n_steps, n_channels), float64
    columns: tuple[str, ...] = ()
    frequency: str = ""
    offset: int = 0

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise DataError(f"values must be a non-empty (n_steps, n_channels) matrix, got {values.shape}")
        if len(self.timestamps) != values.shape[0]:
            raise DataError(f"{len(self.timestamps)} timestamps for {values.shape[0]} rows")
        if not np.all(np.isfinite(values)):
            raise MissingValueError(f"{self.name}: values contain NaN or inf")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "timestamps", tuple(self.timestamps))
        columns = tuple(self.columns) or tuple(f"c{i}" for i in range(values.shape[1]))
        if len(columns) != values.shape[1]:
            raise DataError(f"{len(columns)} column names for {values.shape[1]} channels")
        object.__setattr__(self, "columns", columns)

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]

    def rows(self, start: int, stop: int) -> "SeriesFrame":
        return SeriesFrame(
            name=self.name,
            timestamps=self.timestamps[start:stop],
            values=self.values[start:stop],
            columns=self.columns,
            frequency=self.frequency,
            offset=self.offset + start,
        )

    @classmethod
    def from_array(cls, values, name: str = "series", frequency: str = "") -> "SeriesFrame":
        values = np.asarray(values, dtype=np.float64)
        n = values.shape[0]
        return cls(name=name, timestamps=tuple(str(i) for i in range(n)), values=values,
                   frequency=frequency)


# --- CSV -----------------------------------------------------------------


def _parse_time(label: str):
    try:
        return datetime.fromisoformat(label)
    except ValueError:
        pass
    try:
        return float(label)
    except ValueError:
        raise DataError(f"unparseable timestamp {label!r}") from None


def load_csv(path: str | Path, name: str | None = None, frequency: str = "") -> SeriesFrame:
    """Read ``date,<col1>,...,<colM>`` into a frame; M = column count - 1."""
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r]
    if len(rows) < 2:
        raise EmptyFileError(f"{path}: no data rows")
    header, body = rows[0], rows[1:]
    if len(header) < 2:
        raise EmptyFileError(f"{path}: need a time column and at least one value column")

    stamps, values = [], np.empty((len(body), len(header) - 1))
    prev = None
    for i, row in enumerate(body):
        lineno = i + 2
        if len(row) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        for j, cell in enumerate(row[1:]):
            cell = cell.strip()
            if cell == "" or cell.lower() in ("nan", "na", "null"):
                raise MissingValueError(f"{path}:{lineno}: missing value in column {header[j + 1]!r}")
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise NonNumericError(
                    f"{path}:{lineno}: non-numeric cell {cell!r} in column {header[j + 1]!r}"
                ) from None
        stamp = row[0].strip()
        t = _parse_time(stamp)
        if prev is not None:
            try:
                increasing = t > prev
            except TypeError:
                raise DataError(f"{path}:{lineno}: mixed timestamp formats") from None
            if not increasing:
                raise NonMonotoneTimestampError(f"{path}:{lineno}: timestamp {stamp!r} is not after the previous row")
        prev = t
        stamps.append(stamp)
    if not np.all(np.isfinite(values)):
        raise MissingValueError(f"{path}: non-finite values")
    return SeriesFrame(name=name or path.stem, timestamps=tuple(stamps), values=values,
                       columns=tuple(h.strip() for h in header[1:]), frequency=frequency)


def write_csv(frame: SeriesFrame, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", *frame.columns])
        for stamp, row in zip(frame.timestamps, frame.values):
            writer.writerow([stamp, *(repr(float(v)) for v in row)])


# --- splitting -------------------------------------------------------------


def _exact(r: float | Fraction) -> Fraction:
    # Ratios come from text like "0.2"; recover the decimal the user meant.
    return r if isinstance(r, Fraction) else Fraction(r).limit_denominator(10**9)


@dataclass(frozen=True)
class SplitSpec:
    train_ratio: float = 0.7
    val_ratio: float = 0.1
    test_ratio: float = 0.2
    lookback_overlap: bool = True

    def __post_init__(self) -> None:
        ratios = [_exact(r) for r in self.ratios]
        if any(r <= 0 for r in ratios):
            raise DataError(f"split ratios must be positive, got {self.ratios}")
        if sum(ratios) != 1:
            raise DataError(f"split ratios must sum to 1, got {self.ratios}")

    @property
    def ratios(self) -> tuple[float, float, float]:
        return (self.train_ratio, self.val_ratio, self.test_ratio)

    def sizes(self, n: int) -> tuple[int, int, int]:
        n_val = math.floor(_exact(self.val_ratio) * n)
        n_test = math.floor(_exact(self.test_ratio) * n)
        return n - n_val - n_test, n_val, n_test


def split(frame: SeriesFrame, spec: SplitSpec, min_len: int = 1) -> tuple[SeriesFrame, SeriesFrame, SeriesFrame]:
    """Contiguous train/val/test segments; val and test get floor(ratio * N), train the rest."""
    sizes = spec.sizes(frame.n_steps)
    for label, size in zip(("train", "val", "test"), sizes):
        if size < min_len:
            raise SegmentTooShortError(
                f"{frame.name}: {label} segment has {size} rows, need at least {min_len}"
            )
    a, b = sizes[0], sizes[0] + sizes[1]
    return frame.rows(0, a), frame.rows(a, b), frame.rows(b, frame.n_steps)


def subset_ratio(train: SeriesFrame, r: float) -> SeriesFrame:
    """Most recent ceil(r * N) rows of the training segment."""
    if not 0 < r <= 1:
        raise DataError(f"subset ratio must lie in (0, 1], got {r}")
    if r == 1:
        return train
    keep = math.ceil(_exact(r) * train.n_steps)
    return train.rows(train.n_steps - keep, train.n_steps)


# --- standardization -------------------------------------------------------


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, frame: SeriesFrame) -> SeriesFrame:
        return _with_values(frame, (frame.values - self.mean) / self.std)

    def invert(self, frame: SeriesFrame) -> SeriesFrame:
        return _with_values(frame, frame.values * self.std + self.mean)

    def to_text(self) -> str:
        lines = [f"channels = {len(self.mean)}"]
        lines += [f"mean.{i} = {float(m)!r}" for i, m in enumerate(self.mean)]
        lines += [f"std.{i} = {float(s)!r}" for i, s in enumerate(self.std)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Standardizer":
        from .config import parse_kv

        kv = parse_kv(text)
        n = int(kv["channels"])
        return cls(mean=np.array([float(kv[f"mean.{i}"]) for i in range(n)]),
                   std=np.array([float(kv[f"std.{i}"]) for i in range(n)]))


def fit_standardizer(train: SeriesFrame) -> Standardizer:
    """Per-channel z-score statistics (population std, floored)."""
    mean = train.values.mean(axis=0)
    std = train.values.std(axis=0)
    low = std < SIGMA_FLOOR
    if low.any():
        log.warning("%s: constant channel(s) %s; std floored at %g",
                    train.name, [train.columns[i] for i in np.flatnonzero(low)], SIGMA_FLOOR)
        std = np.where(low, SIGMA_FLOOR, std)
    return Standardizer(mean=mean, std=std)


def _with_values(frame: SeriesFrame, values: np.ndarray) -> SeriesFrame:
    return SeriesFrame(name=frame.name, timestamps=frame.timestamps, values=values,
                       columns=frame.columns, frequency=frame.frequency, offset=frame.offset)


# --- channels and windows --------------------------------------------------


def channel_split(frame: SeriesFrame) -> list[SeriesFrame]:
    return [
        SeriesFrame(name=frame.name, timestamps=frame.timestamps, values=frame.values[:, [c]],
                    columns=(frame.columns[c],), frequency=frame.frequency, offset=frame.offset)
        for c in range(frame.n_channels)
    ]


@dataclass(frozen=True)
class WindowPair:
    lookback: np.ndarray
    target: np.ndarray
    channel_id: int
    origin_t: int


def _window_source(segment: SeriesFrame, L: int, prefix: SeriesFrame | None) -> tuple[np.ndarray, int]:
    """Rows available to windows plus how many of them precede the segment."""
    if prefix is None:
        return segment.values, 0
    if prefix.offset + prefix.n_steps != segment.offset or prefix.n_channels != segment.n_channels:
        raise DataError("overlap prefix must immediately precede the segment with the same channels")
    head = prefix.values[max(0, prefix.n_steps - L):]
    return np.concatenate([head, segment.values]), head.shape[0]


def window_count(n: int, L: int, T: int, prefix_len: int = 0, stride: int = 1) -> int:
    """Number of stride-spaced forecast origins for an n-row segment."""
    first = max(0, L - prefix_len)
    last = n - T
    return 0 if last < first else (last - first) // stride + 1


def window_arrays(segment: SeriesFrame, L: int, T: int, prefix: SeriesFrame | None = None,
                  stride: int = 1) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised windowing: (lookbacks, targets, channel ids, origins).

    Windows are ordered channel-major, then by origin.
    """
    if L <= 0 or T <= 0:
        raise DataError(f"L and T must be positive, got L={L}, T={T}")
    source, pre = _window_source(segment, L, prefix)
    # Forecast origin t (segment-relative) needs rows [t - L, t + T) of the segment.
    origins = np.arange(max(0, L - pre), segment.n_steps - T + 1, stride)
    n_ch = segment.n_channels
    if origins.size == 0:
        empty = np.empty((0, L)), np.empty((0, T))
        return empty[0], empty[1], np.empty(0, dtype=int), np.empty(0, dtype=int)
    idx_lb = (origins + pre)[:, None] + np.arange(-L, 0)[None, :]
    idx_tg = (origins + pre)[:, None] + np.arange(T)[None, :]
    lbs = np.concatenate([source[idx_lb, c] for c in range(n_ch)])
    tgs = np.concatenate([source[idx_tg, c] for c in range(n_ch)])
    channels = np.repeat(np.arange(n_ch), origins.size)
    abs_origins = np.tile(origins + segment.offset, n_ch)
    return lbs, tgs, channels, abs_origins


def make_windows(segment: SeriesFrame, L: int, T: int, allow_overlap_prefix: SeriesFrame | None = None,
                 stride: int = 1) -> list[WindowPair]:
    lbs, tgs, chans, origins = window_arrays(segment, L, T, allow_overlap_prefix, stride)
    return [WindowPair(lb, tg, int(c), int(o)) for lb, tg, c, o in zip(lbs, tgs, chans, origins)]


# --- full pipeline -----------------------------------------------------------


@dataclass
class WindowSet:
    lookback: np.ndarray  # (n, L)
    target: np.ndarray  # (n, T)
    channel: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    origin: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))

    def __len__(self) -> int:
        return self.lookback.shape[0]


@dataclass
class PreparedData:
    train: WindowSet
    val: WindowSet
    test: WindowSet
    standardizer: Standardizer
    sizes: tuple[int, int, int]


def prepare(frame: SeriesFrame, split_spec: SplitSpec, L: int, T: int, *, train_subset: float = 1.0,
            train_stride: int = 1, eval_stride: int = 1, standardize: bool = True,
            test_horizon: int | None = None) -> PreparedData:
    """Split, standardize on train, and window every channel of every segment.

    Test windows use ``test_horizon`` (default ``T``) so longer rollouts can be scored.
    """
    test_T = T if test_horizon is None else test_horizon
    min_len = max(T, test_T) if split_spec.lookback_overlap else L + max(T, test_T)
    train, val, test = split(frame, split_spec, min_len=min_len)
    if train.n_steps < L + T:
        raise SegmentTooShortError(f"{frame.name}: train segment has {train.n_steps} rows, need {L + T}")
    scaler = fit_standardizer(train)
    if standardize:
        train, val, test = scaler.apply(train), scaler.apply(val), scaler.apply(test)
    sub = subset_ratio(train, train_subset)
    if sub.n_steps < L + T:
        raise SegmentTooShortError(f"{frame.name}: training subset has {sub.n_steps} rows, need {L + T}")
    overlap = split_spec.lookback_overlap
    sets = [
        WindowSet(*window_arrays(sub, L, T, stride=train_stride)),
        WindowSet(*window_arrays(val, L, T, train if overlap else None, stride=eval_stride)),
        WindowSet(*window_arrays(test, L, test_T, val if overlap else None, stride=eval_stride)),
    ]
    for label, ws in zip(("train", "val", "test"), sets):
        if len(ws) == 0:
            raise SegmentTooShortError(f"{frame.name}: {label} segment yields no windows")
    return PreparedData(*sets, standardizer=scaler, sizes=split_spec.sizes(frame.n_steps))


def concat_channels(frames: Sequence[SeriesFrame]) -> np.ndarray:
    return np.concatenate([f.values for f in frames], axis=1)
