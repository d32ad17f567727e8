"""CSV ingestion, chronological splits, scaling, window sampling and synthetic series."""
from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np


class DataError(ValueError):
    """Malformed or insufficient input data."""


@dataclass(frozen=True)
class SeriesFrame:
    values: np.ndarray  # (T_total, C)
    channel_names: tuple[str, ...]
    timestamps: tuple[str, ...] | None = None

    @property
    def length(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> int:
        return self.values.shape[1]


def load_csv(path, has_date_column: bool | None = None) -> SeriesFrame:
    """Read a benchmark-style CSV: header row, optional leading ``date`` column.

    ``has_date_column=None`` detects the date column from the header name.
    Empty or non-numeric cells raise :class:`DataError` naming the cell.
    """
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if has_date_column is None:
        has_date_column = header[0].lower() == "date"
    first = 1 if has_date_column else 0
    names = tuple(header[first:])
    if not names:
        raise DataError(f"{path}: no value columns")
    body = rows[1:]
    if len(body) < 2:
        raise DataError(f"{path}: need at least 2 data rows, found {len(body)}")
    values = np.empty((len(body), len(names)))
    stamps = []
    for i, row in enumerate(body):
        line = i + 2
        if len(row) != len(header):
            raise DataError(f"{path}: row {line} has {len(row)} cells, header has {len(header)}")
        if has_date_column:
            stamps.append(row[0])
        for j, cell in enumerate(row[first:]):
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: row {line}, column {j + first + 1} ({names[j]!r}): "
                    f"cannot parse {cell!r}"
                ) from None
            if not np.isfinite(values[i, j]):
                raise DataError(f"{path}: row {line}, column {j + first + 1}: non-finite value")
    return SeriesFrame(values, names, tuple(stamps) if has_date_column else None)


def write_csv(frame: SeriesFrame, path) -> None:
    """Write ``frame`` in the same layout :func:`load_csv` reads (17 significant digits)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        dated = frame.timestamps is not None
        w.writerow((["date"] if dated else []) + list(frame.channel_names))
        for i, row in enumerate(frame.values):
            cells = [format(v, ".17g") for v in row]
            w.writerow(([frame.timestamps[i]] if dated else []) + cells)


class Scaler:
    """Per-channel standardization with statistics from the training rows only."""

    def __init__(self, mean: np.ndarray, std: np.ndarray):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.std = np.where(np.asarray(std) < 1e-8, 1.0, std).astype(np.float64)

    @classmethod
    def fit(cls, values: np.ndarray) -> "Scaler":
        return cls(values.mean(axis=0), values.std(axis=0))

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std

    def inverse_transform(self, x: np.ndarray) -> np.ndarray:
        return x * self.std + self.mean


@dataclass
class WindowSampler:
    """Stride-``stride`` lookback/horizon windows inside fixed split spans.

    ``spans[name] = (start, end)`` are row ranges; every window for a split
    has its inputs and labels inside that range.
    """

    values: np.ndarray
    spans: dict[str, tuple[int, int]]
    lookback: int
    horizon: int
    stride: int = 1
    scaler: Scaler | None = None
    train_rows: tuple[int, int] = (0, 0)
    _starts: dict = field(default_factory=dict, repr=False)

    def starts(self, split: str) -> np.ndarray:
        if split not in self._starts:
            start, end = self.spans[split]
            last = end - self.lookback - self.horizon
            if last < start:
                raise DataError(
                    f"{split} split rows [{start}, {end}) too short for "
                    f"lookback {self.lookback} + horizon {self.horizon}"
                )
            self._starts[split] = np.arange(start, last + 1, self.stride)
        return self._starts[split]

    def count(self, split: str) -> int:
        return len(self.starts(split))

    def windows(self, split: str, index: Sequence[int] | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Inputs ``(B, L, C)`` and targets ``(B, H, C)`` for the given window indices."""
        s = self.starts(split)[np.asarray(index)]
        offs = np.arange(self.lookback + self.horizon)
        block = self.values[s[:, None] + offs]
        return block[:, : self.lookback], block[:, self.lookback:]

    def batches(self, split: str, batch_size: int,
                rng: np.random.Generator | None = None) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        n = self.count(split)
        order = rng.permutation(n) if rng is not None else np.arange(n)
        for i in range(0, n, batch_size):
            yield self.windows(split, order[i:i + batch_size])


ETT_HOUR_SPANS = (12 * 30 * 24, 4 * 30 * 24, 4 * 30 * 24)
ETT_MINUTE_SPANS = tuple(4 * s for s in ETT_HOUR_SPANS)


def chronological_split(frame: SeriesFrame, lookback: int, horizon: int,
                        ratios: tuple[float, float, float] = (0.7, 0.1, 0.2),
                        spans: tuple[int, int, int] | None = None,
                        stride: int = 1, scale: bool = True) -> WindowSampler:
    """Train/val/test spans in time order; val and test borrow ``lookback`` context rows.

    ``spans`` (row counts) take precedence over ``ratios``. With ``scale`` the
    values are standardized with train-span statistics.
    """
    total = frame.length
    if spans is not None:
        n_train, n_val, n_test = spans
        if n_train + n_val + n_test > total:
            raise DataError(f"spans {spans} exceed series length {total}")
    else:
        if any(r < 0 for r in ratios) or sum(ratios) > 1 + 1e-9:
            raise DataError(f"split ratios must be non-negative and sum to <= 1, got {ratios}")
        n_train = int(total * ratios[0])
        n_test = int(total * ratios[2])
        if abs(sum(ratios) - 1) <= 1e-9:
            n_val = total - n_train - n_test
        else:
            n_val = int(total * ratios[1])
    used = n_train + n_val + n_test
    split_spans = {
        "train": (0, n_train),
        "val": (max(n_train - lookback, 0), n_train + n_val),
        "test": (max(n_train + n_val - lookback, 0), used),
    }
    if stride < 1:
        raise DataError(f"stride must be >= 1, got {stride}")
    if n_train == 0:
        raise DataError("train split is empty")
    scaler = Scaler.fit(frame.values[:n_train]) if scale else None
    values = scaler.transform(frame.values) if scaler else frame.values.copy()
    sampler = WindowSampler(values, split_spans, lookback, horizon, stride, scaler, (0, n_train))
    for name in split_spans:
        sampler.starts(name)
    return sampler


def synth_trend_seasonal(length: int, channels: int, slopes=0.0, periods=24.0,
                         amplitudes=1.0, noise: float = 0.0, seed: int = 0,
                         start: str = "2020-01-01 00:00:00") -> SeriesFrame:
    """``x[t, c] = slope_c * t + amp_c * sin(2 pi t / period_c) + noise``.

    Scalar arguments are broadcast across channels; timestamps are hourly.
    """
    def per_channel(v):
        return np.broadcast_to(np.asarray(v, dtype=np.float64), (channels,)).copy()

    slopes = per_channel(slopes)
    periods = per_channel(periods)
    amps = per_channel(amplitudes)
    if np.any(periods < 2):
        raise DataError(f"seasonal periods must be >= 2, got {periods}")
    t = np.arange(length, dtype=np.float64)[:, None]
    values = slopes * t + amps * np.sin(2 * np.pi * t / periods)
    if noise > 0:
        values = values + np.random.default_rng(seed).normal(0.0, noise, values.shape)
    t0 = dt.datetime.fromisoformat(start)
    stamps = tuple((t0 + dt.timedelta(hours=i)).strftime("%Y-%m-%d %H:%M:%S")
                   for i in range(length))
    names = tuple(f"ch{c}" for c in range(channels))
    return SeriesFrame(values, names, stamps)
