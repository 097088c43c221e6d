"""Dataset loading, train/test splitting and window scaling.

Values files follow the public competition layout: one series per line,
``id,x_1,x_2,...`` oldest first, with empty trailing cells allowed. A
metadata file with header ``id,frequency,horizon,m`` supplies the horizon
and seasonal period of every series.
"""

from __future__ import annotations

import csv
import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .exceptions import DataError


class Frequency(str, enum.Enum):
    YEARLY = "Yearly"
    QUARTERLY = "Quarterly"
    MONTHLY = "Monthly"
    WEEKLY = "Weekly"
    DAILY = "Daily"
    HOURLY = "Hourly"
    OTHER = "Other"

    @classmethod
    def parse(cls, text: str) -> "Frequency":
        if isinstance(text, cls):
            return text
        for f in cls:
            if f.value.lower() == str(text).strip().lower():
                return f
        raise DataError(f"unknown frequency {text!r}; expected one of {[f.value for f in cls]}")


SEASONALITY = {
    Frequency.YEARLY: 1,
    Frequency.QUARTERLY: 4,
    Frequency.MONTHLY: 12,
    Frequency.WEEKLY: 1,
    Frequency.DAILY: 1,
    Frequency.HOURLY: 24,
    Frequency.OTHER: 1,
}

M4_HORIZONS = {
    Frequency.YEARLY: 6,
    Frequency.QUARTERLY: 8,
    Frequency.MONTHLY: 18,
    Frequency.WEEKLY: 13,
    Frequency.DAILY: 14,
    Frequency.HOURLY: 48,
}


@dataclass(frozen=True)
class TimeSeries:
    id: str
    values: np.ndarray
    frequency: Frequency
    horizon: int
    m: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size == 0:
            raise DataError(f"series {self.id!r} must be a non-empty 1-d sequence")
        if not np.all(np.isfinite(values)):
            raise DataError(f"series {self.id!r} contains non-finite values")
        object.__setattr__(self, "values", values)
        if self.horizon < 1 or self.m < 1:
            raise DataError(f"series {self.id!r}: horizon and m must be positive")

    def __len__(self) -> int:
        return self.values.size


@dataclass
class Dataset:
    """Series plus an optional split: ``id -> boundary`` (train is ``values[:boundary]``)."""

    series: list[TimeSeries]
    split: dict[str, int] | None = None
    excluded: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.series)

    def __iter__(self):
        return iter(self.series)

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.series]

    def train(self) -> list[np.ndarray]:
        """Training histories (whole series when there is no split)."""
        if self.split is None:
            return [s.values for s in self.series]
        return [s.values[: self.split[s.id]] for s in self.series]

    def test(self) -> list[np.ndarray]:
        if self.split is None:
            raise DataError("dataset has no train/test split")
        return [s.values[self.split[s.id]:] for s in self.series]

    def by_frequency(self) -> dict[Frequency, "Dataset"]:
        groups: dict[Frequency, list[TimeSeries]] = {}
        for s in self.series:
            groups.setdefault(s.frequency, []).append(s)
        return {f: self.subset(g) for f, g in groups.items()}

    def subset(self, series: Iterable[TimeSeries]) -> "Dataset":
        series = list(series)
        split = None if self.split is None else {s.id: self.split[s.id] for s in series}
        return Dataset(series, split)

    def horizon(self) -> int:
        """The common horizon of all series."""
        hs = {s.horizon for s in self.series}
        if len(hs) != 1:
            raise DataError(f"series do not share one horizon: {sorted(hs)}")
        return hs.pop()


def _parse_float(cell: str, where: str) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise DataError(f"{where}: non-numeric cell {cell!r}") from None
    if not math.isfinite(v):
        raise DataError(f"{where}: non-finite cell {cell!r}")
    return v


def _is_header(row: list[str]) -> bool:
    if not row:
        return False
    head = row[0].strip().lower()
    if head in ("id", "v1", "series", "series_id"):
        return True
    return False


def read_values(path) -> dict[str, np.ndarray]:
    """Parse a values file into ``id -> observations`` preserving file order."""
    out: dict[str, np.ndarray] = {}
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if lineno == 1 and _is_header(row):
                continue
            sid = row[0].strip()
            cells = row[1:]
            while cells and not cells[-1].strip():
                cells.pop()
            where = f"{path}:{lineno}"
            if not sid:
                raise DataError(f"{where}: empty series id")
            if sid in out:
                raise DataError(f"{where}: duplicate id {sid!r}")
            out[sid] = np.array([_parse_float(c.strip(), where) for c in cells], dtype=np.float64)
    return out


def read_metadata(path) -> dict[str, tuple[Frequency, int, int]]:
    """Parse ``id,frequency,horizon,m``; a blank ``m`` takes the canonical period."""
    out: dict[str, tuple[Frequency, int, int]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"id", "frequency", "horizon", "m"} - set(reader.fieldnames or [])
        if missing:
            raise DataError(f"{path}: metadata header lacks {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            where = f"{path}:{lineno}"
            sid = row["id"].strip()
            if sid in out:
                raise DataError(f"{where}: duplicate id {sid!r}")
            freq = Frequency.parse(row["frequency"])
            try:
                horizon = int(row["horizon"])
                m = int(row["m"]) if (row["m"] or "").strip() else SEASONALITY[freq]
            except ValueError:
                raise DataError(f"{where}: horizon and m must be integers") from None
            if freq is not Frequency.OTHER and m != SEASONALITY[freq]:
                raise DataError(f"{where}: {freq.value} series must have m={SEASONALITY[freq]}, got {m}")
            out[sid] = (freq, horizon, m)
    return out


def load_dataset(values_path, meta_path) -> Dataset:
    """Load a values file and join it with its metadata.

    Raises:
        DataError: on a non-numeric cell, duplicate id, or a series whose id
            has no metadata row. Metadata rows for absent ids are ignored.
    """
    values = read_values(values_path)
    meta = read_metadata(meta_path)
    series = []
    for sid, vals in values.items():
        if sid not in meta:
            raise DataError(f"series {sid!r} has no metadata row in {meta_path}")
        if vals.size == 0:
            raise DataError(f"series {sid!r} in {values_path} has no observations")
        freq, horizon, m = meta[sid]
        series.append(TimeSeries(sid, vals, freq, horizon, m))
    return Dataset(series)


def load_m4(train_path, test_path, frequency: Frequency | str, limit: int | None = None) -> Dataset:
    """Join competition train/test files into full series split at the train end."""
    freq = Frequency.parse(frequency) if isinstance(frequency, str) else frequency
    train = read_values(train_path)
    test = read_values(test_path)
    series, split = [], {}
    for sid, hist in train.items():
        if limit is not None and len(series) >= limit:
            break
        if sid not in test:
            raise DataError(f"series {sid!r} missing from {test_path}")
        fut = test[sid]
        series.append(TimeSeries(sid, np.concatenate([hist, fut]), freq, fut.size, SEASONALITY[freq]))
        split[sid] = hist.size
    return Dataset(series, split)


def save_values(ds: Dataset | Sequence[TimeSeries], path) -> None:
    """Write a values file; floats use ``repr`` so reloading is exact."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for s in ds:
            writer.writerow([s.id, *(repr(float(v)) for v in s.values)])


def save_metadata(ds: Dataset | Sequence[TimeSeries], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "frequency", "horizon", "m"])
        for s in ds:
            writer.writerow([s.id, s.frequency.value, s.horizon, s.m])


def train_test_split(ds: Dataset) -> Dataset:
    """Hold out the last ``H`` values of every series.

    Series with ``T <= H`` are dropped with a warning and listed in
    ``excluded`` of the result.
    """
    kept, split, excluded = [], {}, []
    for s in ds.series:
        if len(s) <= s.horizon:
            excluded.append(s.id)
            continue
        kept.append(s)
        split[s.id] = len(s) - s.horizon
    if excluded:
        warnings.warn(f"{len(excluded)} series too short for their horizon were excluded: "
                      f"{', '.join(excluded)}", stacklevel=2)
    return Dataset(kept, split, excluded)


def scale_windows(inputs: np.ndarray, targets: np.ndarray | None = None,
                  mode: str = "per-union") -> tuple[np.ndarray, np.ndarray | None, np.ndarray]:
    """Divide windows by their largest absolute value.

    Args:
        inputs: ``[N, L, W]`` per-head windows (zeros at padded positions).
        targets: optional ``[N, H, W]`` or ``[N, H]`` values scaled alongside.
        mode: ``"per-window"`` gives every head its own factor;
            ``"per-union"`` gives all heads of a series the maximum over the
            union of their windows.

    Returns:
        Scaled inputs, scaled targets (or None) and factors ``s`` of shape
        ``[N, W]``; an all-zero window gets ``s = 1``.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    if mode == "per-window":
        s = np.abs(inputs).max(axis=1)
    elif mode == "per-union":
        s = np.broadcast_to(np.abs(inputs).max(axis=(1, 2))[:, None], inputs.shape[::2]).copy()
    else:
        raise DataError(f"unknown scaling mode {mode!r}")
    s[s == 0] = 1.0
    scaled_targets = None
    if targets is not None:
        targets = np.asarray(targets, dtype=np.float64)
        if targets.ndim == 3:
            scaled_targets = targets / s[:, None, :]
        else:
            scaled_targets = targets / s[:, -1:]
    return inputs / s[:, None, :], scaled_targets, s


def unscale_forecast(forecast: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Multiply ``[N, H, W]`` forecasts by ``[N, W]`` factors (or ``[N, H]`` by ``[N]``)."""
    forecast = np.asarray(forecast)
    s = np.asarray(s)
    if forecast.ndim == 3:
        return forecast * s[:, None, :]
    return forecast * s.reshape(-1, 1)
