"""Regional time-series data model, CSV ingestion, harmonisation and splits.

Timestamps are stored as integer *minutes* since the Unix epoch (UTC) so that
raw half-hourly files can be represented before :func:`harmonize_hourly`
collapses them.  After harmonisation every timestamp is a whole hour and
:attr:`RegionSeries.hours` gives the hour index.
"""
from __future__ import annotations

import csv
import json
import os
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    EmptyInput,
    EmptyPartition,
    InvalidSplit,
    IrregularCadence,
    MalformedRow,
    MissingColumn,
    NonMonotonicTime,
    TargetOutOfRange,
)

MINUTES_PER_HOUR = 60
_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RegionSeries:
    """Chronologically sorted capacity factors ``y`` with covariates ``x``.

    ``t`` holds int64 minutes since epoch, ``y`` per-unit values in [0, 1]
    and ``x`` an ``(m, d)`` covariate matrix whose columns are named by
    ``covariate_names``.  Arrays are copied and made read-only.
    """

    region_id: str
    t: np.ndarray
    y: np.ndarray
    x: np.ndarray
    covariate_names: tuple[str, ...]

    def __post_init__(self):
        t = np.asarray(self.t, dtype=np.int64).reshape(-1)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        x = np.asarray(self.x, dtype=float)
        names = tuple(str(n) for n in self.covariate_names)
        if x.ndim == 1 and len(names) == 0:
            x = x.reshape(len(t), 0)
        if len(t) < 1:
            raise EmptyInput(f"region {self.region_id!r}: series must hold at least one point")
        if y.shape != t.shape or x.ndim != 2 or x.shape[0] != len(t):
            raise ValueError("t, y and x must have matching lengths")
        if x.shape[1] != len(names):
            raise ValueError(f"{x.shape[1]} covariate columns but {len(names)} names")
        bad = np.flatnonzero(np.diff(t) <= 0)
        if bad.size:
            raise NonMonotonicTime(f"region {self.region_id!r}: timestamps not strictly "
                                   f"increasing at index {bad[0] + 1}")
        out = np.flatnonzero(~((y >= 0.0) & (y <= 1.0)))
        if out.size:
            raise TargetOutOfRange(f"region {self.region_id!r}: y={y[out[0]]!r} at index "
                                   f"{out[0]} outside [0, 1]")
        object.__setattr__(self, "t", _frozen(t))
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "x", _frozen(x))
        object.__setattr__(self, "covariate_names", names)

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, item) -> "RegionSeries":
        if not isinstance(item, slice):
            raise TypeError("RegionSeries supports slice indexing only")
        return RegionSeries(self.region_id, self.t[item], self.y[item], self.x[item],
                            self.covariate_names)

    def __eq__(self, other) -> bool:
        if not isinstance(other, RegionSeries):
            return NotImplemented
        return (self.region_id == other.region_id
                and self.covariate_names == other.covariate_names
                and np.array_equal(self.t, other.t)
                and np.array_equal(self.y, other.y)
                and self.x.shape == other.x.shape
                and np.array_equal(self.x, other.x))

    __hash__ = None

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def hours(self) -> np.ndarray:
        return self.t // MINUTES_PER_HOUR

    @property
    def is_hourly(self) -> bool:
        if np.any(self.t % MINUTES_PER_HOUR):
            return False
        return bool(np.all(np.diff(self.t) == MINUTES_PER_HOUR))

    def covariate(self, name: str) -> np.ndarray:
        try:
            return self.x[:, self.covariate_names.index(name)]
        except ValueError:
            raise KeyError(name) from None

    def with_covariate(self, name: str, values) -> "RegionSeries":
        values = np.asarray(values, dtype=float).reshape(-1, 1)
        return RegionSeries(self.region_id, self.t, self.y, np.hstack([self.x, values]),
                            self.covariate_names + (name,))

    def drop_covariates(self, names: Iterable[str]) -> "RegionSeries":
        names = set(names)
        keep = [i for i, n in enumerate(self.covariate_names) if n not in names]
        return RegionSeries(self.region_id, self.t, self.y, self.x[:, keep],
                            tuple(self.covariate_names[i] for i in keep))


def concat(parts: Sequence[RegionSeries]) -> RegionSeries:
    """Join consecutive pieces of the same region back into one series."""
    first = parts[0]
    return RegionSeries(first.region_id,
                        np.concatenate([p.t for p in parts]),
                        np.concatenate([p.y for p in parts]),
                        np.vstack([p.x for p in parts]),
                        first.covariate_names)


# --------------------------------------------------------------------------
# CSV ingestion
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CsvSchema:
    """Column mapping for a regional CSV file.

    ``capacity`` optionally names a column of installed capacity; when set,
    the raw target is divided by it at ingest.
    """

    timestamp: str = "timestamp"
    target: str = "y"
    covariates: tuple[str, ...] = ()
    capacity: str | None = None
    region_id: str = "region"

    @classmethod
    def from_mapping(cls, m: Mapping) -> "CsvSchema":
        allowed = {"timestamp", "target", "covariates", "capacity", "region_id"}
        unknown = set(m) - allowed
        if unknown:
            raise ValueError(f"unknown schema keys: {sorted(unknown)}")
        kw = dict(m)
        if "covariates" in kw:
            kw["covariates"] = tuple(kw["covariates"])
        return cls(**kw)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "CsvSchema":
        with open(path, encoding="utf-8") as fh:
            return cls.from_mapping(json.load(fh))

    def to_dict(self) -> dict:
        return {"timestamp": self.timestamp, "target": self.target,
                "covariates": list(self.covariates), "capacity": self.capacity,
                "region_id": self.region_id}


def parse_timestamp(text: str) -> int:
    """Parse integer epoch-hours or an ISO-8601 UTC string to epoch minutes."""
    s = text.strip()
    if s.lstrip("-").isdigit():
        return int(s) * MINUTES_PER_HOUR
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    seconds = (dt - _EPOCH).total_seconds()
    if seconds % 60:
        raise ValueError(f"sub-minute timestamp {text!r}")
    return int(seconds // 60)


def format_timestamp(minutes: int) -> str:
    if minutes % MINUTES_PER_HOUR == 0:
        return str(minutes // MINUTES_PER_HOUR)
    dt = datetime.fromtimestamp(int(minutes) * 60, tz=timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


def _as_schema(schema) -> CsvSchema:
    if isinstance(schema, CsvSchema):
        return schema
    if isinstance(schema, Mapping):
        return CsvSchema.from_mapping(schema)
    return CsvSchema.load(schema)


def ingest_csv(path: str | os.PathLike, schema: CsvSchema | Mapping | str | os.PathLike,
               region_id: str | None = None) -> RegionSeries:
    schema = _as_schema(schema)
    rid = region_id or schema.region_id
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MissingColumn(f"{path}: empty file, header row required") from None
        header = [h.strip() for h in header]
        wanted = [schema.timestamp, schema.target, *schema.covariates]
        if schema.capacity:
            wanted.append(schema.capacity)
        missing = [c for c in wanted if c not in header]
        if missing:
            raise MissingColumn(f"{path}: missing columns {missing}")
        col = {name: header.index(name) for name in wanted}

        ts, ys, xs = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                t = parse_timestamp(row[col[schema.timestamp]])
                y = float(row[col[schema.target]])
                x = [float(row[col[c]]) for c in schema.covariates]
                if schema.capacity:
                    y = y / float(row[col[schema.capacity]])
            except (ValueError, IndexError, ZeroDivisionError) as exc:
                raise MalformedRow(f"{path}:{lineno}: {exc}") from None
            if not (0.0 <= y <= 1.0):
                raise TargetOutOfRange(f"{path}:{lineno}: target {y!r} outside [0, 1]")
            if ts and t <= ts[-1]:
                raise NonMonotonicTime(f"{path}:{lineno}: timestamp does not increase")
            ts.append(t)
            ys.append(y)
            xs.append(x)
    if not ts:
        raise EmptyInput(f"{path}: no data rows")
    x = np.array(xs, dtype=float).reshape(len(ts), len(schema.covariates))
    return RegionSeries(rid, np.array(ts, dtype=np.int64), np.array(ys), x, schema.covariates)


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def series_to_csv(series: RegionSeries, schema: CsvSchema | None = None) -> str:
    schema = schema or CsvSchema(covariates=series.covariate_names, region_id=series.region_id)
    if tuple(schema.covariates) != series.covariate_names:
        raise MissingColumn("schema covariates do not match the series")
    cols = [schema.timestamp, schema.target, *schema.covariates]
    if schema.capacity:
        cols.append(schema.capacity)
    lines = [",".join(cols)]
    for i in range(len(series)):
        cells = [format_timestamp(int(series.t[i])), repr(float(series.y[i]))]
        cells.extend(repr(float(v)) for v in series.x[i])
        if schema.capacity:
            cells.append("1.0")
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def emit_csv(series: RegionSeries, path: str | os.PathLike, schema: CsvSchema | None = None) -> None:
    """Write ``series`` in the layout described by ``schema`` (lossless floats)."""
    atomic_write_text(path, series_to_csv(series, schema))


# --------------------------------------------------------------------------
# Harmonisation
# --------------------------------------------------------------------------

def harmonize_hourly(series: RegionSeries) -> RegionSeries:
    """Average sub-hourly samples into hourly points.

    The input must sit on one regular cadence that divides an hour.  Gaps are
    never imputed and raise :class:`IrregularCadence`.
    """
    t = series.t
    if len(t) == 1:
        if t[0] % MINUTES_PER_HOUR:
            raise IrregularCadence("single sample is not aligned to an hour")
        return series
    steps = np.unique(np.diff(t))
    if steps.size != 1:
        raise IrregularCadence(f"region {series.region_id!r}: mixed sample spacings "
                               f"{steps.tolist()[:5]} minutes")
    step = int(steps[0])
    if step == MINUTES_PER_HOUR and not np.any(t % MINUTES_PER_HOUR):
        return series
    if MINUTES_PER_HOUR % step:
        raise IrregularCadence(f"region {series.region_id!r}: {step}-minute cadence "
                               "does not divide one hour")
    hour = t // MINUTES_PER_HOUR
    starts = np.flatnonzero(np.r_[True, hour[1:] != hour[:-1]])
    counts = np.diff(np.r_[starts, len(t)])
    y = np.add.reduceat(series.y, starts) / counts
    x = (np.add.reduceat(series.x, starts, axis=0) / counts[:, None]
         if series.d else np.zeros((len(starts), 0)))
    # averages of values in [0, 1] can round a hair outside the interval
    y = np.clip(y, 0.0, 1.0)
    return RegionSeries(series.region_id, hour[starts] * MINUTES_PER_HOUR, y, x,
                        series.covariate_names)


# --------------------------------------------------------------------------
# Splitting
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    """Half-open ``[start, end)`` hour ranges, ordered train < validation < test."""

    train: tuple[int, int]
    validation: tuple[int, int]
    test: tuple[int, int]

    def __post_init__(self):
        ranges = (self.train, self.validation, self.test)
        for name, (a, b) in zip(("train", "validation", "test"), ranges):
            if not a < b:
                raise InvalidSplit(f"{name} range [{a}, {b}) is empty or reversed")
        if not (self.train[1] <= self.validation[0] and self.validation[1] <= self.test[0]):
            raise InvalidSplit("split ranges overlap or are out of chronological order")

    @classmethod
    def from_counts(cls, start_hour: int, train: int, validation: int, test: int) -> "SplitSpec":
        a = int(start_hour)
        return cls((a, a + train), (a + train, a + train + validation),
                   (a + train + validation, a + train + validation + test))

    def to_dict(self) -> dict:
        return {"train": list(self.train), "validation": list(self.validation),
                "test": list(self.test)}


def split(series: RegionSeries, spec: SplitSpec) -> tuple[RegionSeries, RegionSeries, RegionSeries]:
    hours = series.hours
    parts = []
    for name, (a, b) in (("train", spec.train), ("validation", spec.validation),
                         ("test", spec.test)):
        lo, hi = np.searchsorted(hours, [a, b], side="left")
        if hi <= lo:
            raise EmptyPartition(f"{name} range [{a}, {b}) captures no points of "
                                 f"region {series.region_id!r}")
        parts.append(series[int(lo):int(hi)])
    return tuple(parts)


# --------------------------------------------------------------------------
# Normalisation
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CovariateStats:
    mean: np.ndarray
    stddev: np.ndarray
    names: tuple[str, ...] = field(default=())

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "stddev": self.stddev.tolist(),
                "names": list(self.names)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "CovariateStats":
        return cls(np.asarray(d["mean"], dtype=float), np.asarray(d["stddev"], dtype=float),
                   tuple(d.get("names", ())))


_CONST_TOL = 1e-12


def fit_covariate_stats(train: RegionSeries) -> CovariateStats:
    """Population mean/stddev per column; constant columns get stddev 1."""
    mean = train.x.mean(axis=0)
    std = train.x.std(axis=0)
    std = np.where(std <= _CONST_TOL * np.maximum(1.0, np.abs(mean)), 1.0, std)
    return CovariateStats(mean, std, train.covariate_names)


def apply_normalization(series: RegionSeries, stats: CovariateStats) -> RegionSeries:
    if stats.mean.shape != (series.d,):
        raise ValueError(f"stats cover {stats.mean.shape[0]} columns, series has {series.d}")
    x = (series.x - stats.mean) / stats.stddev
    return RegionSeries(series.region_id, series.t, series.y, x, series.covariate_names)
