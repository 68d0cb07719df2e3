"""Hourly demand and wind capacity-factor tables.

A :class:`TimeSeriesTable` holds one calendar-indexed hourly series per bus
for demand (MW) and wind capacity factor. Leap days are dropped at
construction so that every calendar year has exactly 8760 hours.

Calendar blocks (whole months, and 168 h weeks tiled from the start of each
meteorological season) are the units the resampler draws from.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import logging
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from buq.errors import InsufficientData, OutOfRange, ParseError, ValidationError

logger = logging.getLogger(__name__)

HOURS_PER_YEAR = 8760
HOURS_PER_WEEK = 168
ONE_HOUR = np.timedelta64(1, "h")

SEASONS = ("DJF", "MAM", "JJA", "SON")
SEASON_OF_MONTH = {12: "DJF", 1: "DJF", 2: "DJF", 3: "MAM", 4: "MAM", 5: "MAM",
                   6: "JJA", 7: "JJA", 8: "JJA", 9: "SON", 10: "SON", 11: "SON"}
# Month lengths with Feb 29 removed.
MONTH_HOURS = {m: 24 * d for m, d in
               zip(range(1, 13), (31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31))}

CSV_COLUMNS = ("timestamp", "bus", "demand_mw", "wind_cf")


def _is_feb29(ts: np.ndarray) -> np.ndarray:
    days = ts.astype("datetime64[D]")
    months = days.astype("datetime64[M]")
    return ((months.astype(int) % 12) == 1) & ((days - months).astype(int) == 28)


def noleap_hours(start: str | np.datetime64, n: int) -> np.ndarray:
    """Return ``n`` consecutive hourly timestamps from ``start`` skipping Feb 29."""
    start = np.datetime64(start, "h")
    out = np.empty(0, dtype="datetime64[h]")
    # Over-generate then drop leap days; each year drops at most 24 h.
    extra = 24 * (n // HOURS_PER_YEAR + 2)
    while out.size < n:
        cand = start + np.arange(n + extra) * ONE_HOUR
        out = cand[~_is_feb29(cand)][:n]
        extra *= 2
    return out


def _check_contiguous(ts: np.ndarray) -> None:
    if ts.size < 2:
        return
    step = np.diff(ts.astype("int64"))
    ok = step == 1
    # A 25 h step is legal only when it skips a dropped Feb 29.
    skip = step == 25
    if skip.any():
        nxt = ts[1:][skip]
        feb29 = (nxt - np.timedelta64(24, "h"))
        ok[skip] = _is_feb29(feb29)
    if not ok.all():
        i = int(np.flatnonzero(~ok)[0])
        raise ValidationError(f"gap in hourly timestamps after {ts[i]} (next is {ts[i + 1]})")


@dataclass(frozen=True, eq=False)
class TimeSeriesTable:
    """Hourly demand (MW) and wind capacity factor per bus.

    ``demand`` and ``wind_cf`` are read-only arrays of shape
    ``(len(bus_ids), T)``. Construction validates every invariant; Feb 29
    rows must already be absent (use :meth:`from_arrays` to drop them).
    """

    timestamps: np.ndarray
    bus_ids: tuple[str, ...]
    demand: np.ndarray
    wind_cf: np.ndarray

    def __post_init__(self) -> None:
        ts = np.asarray(self.timestamps, dtype="datetime64[h]")
        demand = np.array(self.demand, dtype=float, ndmin=2)
        wind = np.array(self.wind_cf, dtype=float, ndmin=2)
        buses = tuple(str(b) for b in self.bus_ids)
        if len(set(buses)) != len(buses):
            raise ValidationError("duplicate bus ids")
        expected = (len(buses), ts.size)
        if demand.shape != expected or wind.shape != expected:
            raise ValidationError(
                f"series shape mismatch: demand {demand.shape}, wind {wind.shape}, expected {expected}")
        if not (np.isfinite(demand).all() and np.isfinite(wind).all()):
            raise ValidationError("NaN or infinite values in series")
        if (demand < 0).any():
            raise ValidationError("negative demand")
        if (wind < 0).any() or (wind > 1).any():
            raise ValidationError("wind capacity factor outside [0, 1]")
        if _is_feb29(ts).any():
            raise ValidationError("Feb 29 rows present; normalise with TimeSeriesTable.from_arrays")
        _check_contiguous(ts)
        for arr in (ts, demand, wind):
            arr.flags.writeable = False
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "demand", demand)
        object.__setattr__(self, "wind_cf", wind)
        object.__setattr__(self, "bus_ids", buses)

    @classmethod
    def from_arrays(cls, timestamps, bus_ids, demand, wind_cf) -> TimeSeriesTable:
        """Build a table, dropping any Feb 29 rows first."""
        ts = np.asarray(timestamps, dtype="datetime64[h]")
        keep = ~_is_feb29(ts)
        demand = np.array(demand, dtype=float, ndmin=2)[:, keep]
        wind_cf = np.array(wind_cf, dtype=float, ndmin=2)[:, keep]
        return cls(ts[keep], tuple(bus_ids), demand, wind_cf)

    def __len__(self) -> int:
        return int(self.timestamps.size)

    @property
    def n_hours(self) -> int:
        return len(self)

    def bus_index(self, bus: str) -> int:
        try:
            return self.bus_ids.index(str(bus))
        except ValueError:
            raise KeyError(f"unknown bus {bus!r}") from None

    def demand_of(self, bus: str) -> np.ndarray:
        return self.demand[self.bus_index(bus)]

    def wind_of(self, bus: str) -> np.ndarray:
        return self.wind_cf[self.bus_index(bus)]

    def slice(self, start: int, stop: int) -> TimeSeriesTable:
        if not 0 <= start <= stop <= len(self):
            raise OutOfRange(f"rows [{start}, {stop}) outside table of length {len(self)}")
        return TimeSeriesTable(self.timestamps[start:stop].copy(), self.bus_ids,
                               self.demand[:, start:stop].copy(), self.wind_cf[:, start:stop].copy())

    def with_demand(self, demand: np.ndarray) -> TimeSeriesTable:
        return TimeSeriesTable(self.timestamps, self.bus_ids, demand, self.wind_cf)

    def fingerprint(self) -> str:
        """SHA-256 over timestamps, bus labels and raw series bytes."""
        h = hashlib.sha256()
        h.update(self.timestamps.astype("int64").tobytes())
        h.update("\x1f".join(self.bus_ids).encode())
        h.update(np.ascontiguousarray(self.demand).tobytes())
        h.update(np.ascontiguousarray(self.wind_cf).tobytes())
        return h.hexdigest()

    def years(self) -> np.ndarray:
        return self.timestamps.astype("datetime64[Y]").astype(int) + 1970

    def full_years(self) -> list[int]:
        """Calendar years present with all 8760 hours."""
        yrs = self.years()
        values, counts = np.unique(yrs, return_counts=True)
        return [int(y) for y, c in zip(values, counts) if c == HOURS_PER_YEAR]

    def to_frame(self) -> pd.DataFrame:
        """Long-format frame in the CSV column layout."""
        n_bus, T = self.demand.shape
        return pd.DataFrame({
            "timestamp": np.tile(self.timestamps, n_bus),
            "bus": np.repeat(np.array(self.bus_ids, dtype=object), T),
            "demand_mw": self.demand.ravel(),
            "wind_cf": self.wind_cf.ravel(),
        })


def concat(tables: Sequence[TimeSeriesTable], start: str | np.datetime64 = "2001-01-01T00") -> TimeSeriesTable:
    """Concatenate tables row-wise under fresh consecutive (no-leap) timestamps."""
    if not tables:
        raise ValueError("nothing to concatenate")
    buses = tables[0].bus_ids
    for t in tables[1:]:
        if t.bus_ids != buses:
            raise ValidationError("bus ids differ between concatenated tables")
    demand = np.concatenate([t.demand for t in tables], axis=1)
    wind = np.concatenate([t.wind_cf for t in tables], axis=1)
    return TimeSeriesTable(noleap_hours(start, demand.shape[1]), buses, demand, wind)


# ---------------------------------------------------------------------------
# CSV ingest / export

def load_csv(path: str | Path) -> TimeSeriesTable:
    """Read a long-format CSV (``timestamp,bus,demand_mw,wind_cf``).

    Raises
    ------
    ParseError
        Missing columns, unparseable timestamps or numbers, duplicate rows.
    ValidationError
        Gaps, NaNs, negative demand or capacity factors outside [0, 1].
    """
    path = Path(path)
    try:
        df = pd.read_csv(path, dtype={"bus": str}, keep_default_na=False, na_values=[])
    except (pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    missing = [c for c in CSV_COLUMNS if c not in df.columns]
    if missing:
        raise ParseError(f"{path}: missing columns {missing}")
    try:
        ts = pd.to_datetime(df["timestamp"], format="ISO8601")
    except (ValueError, TypeError) as exc:
        raise ParseError(f"{path}: bad timestamp: {exc}") from exc
    if getattr(ts.dt, "tz", None) is not None:
        raise ParseError(f"{path}: timestamps must be timezone-naive")
    if (ts.dt.minute != 0).any() or (ts.dt.second != 0).any():
        raise ParseError(f"{path}: timestamps must fall on the hour")
    values = {}
    for col in ("demand_mw", "wind_cf"):
        try:
            values[col] = pd.to_numeric(df[col], errors="raise").astype(float)
        except (ValueError, TypeError) as exc:
            raise ParseError(f"{path}: non-numeric {col}: {exc}") from exc
    frame = pd.DataFrame({"timestamp": ts.values.astype("datetime64[h]"), "bus": df["bus"].astype(str),
                          "demand_mw": values["demand_mw"], "wind_cf": values["wind_cf"]})
    if frame.duplicated(["timestamp", "bus"]).any():
        raise ParseError(f"{path}: duplicate (timestamp, bus) rows")
    buses = list(dict.fromkeys(frame["bus"]))
    wide_d = frame.pivot(index="timestamp", columns="bus", values="demand_mw")[buses]
    wide_w = frame.pivot(index="timestamp", columns="bus", values="wind_cf")[buses]
    if wide_d.isna().any().any() or wide_w.isna().any().any():
        raise ValidationError(f"{path}: series missing for some (timestamp, bus) pairs")
    stamps = wide_d.index.values.astype("datetime64[h]")
    return TimeSeriesTable.from_arrays(stamps, buses, wide_d.to_numpy().T, wide_w.to_numpy().T)


def write_csv(table: TimeSeriesTable, path: str | Path) -> None:
    frame = table.to_frame()
    frame["timestamp"] = pd.to_datetime(frame["timestamp"]).dt.strftime("%Y-%m-%dT%H:%M:%S")
    frame.to_csv(path, index=False, float_format="%.12g", lineterminator="\n")


# ---------------------------------------------------------------------------
# Detrending

def detrend_demand(table: TimeSeriesTable, method: str = "none") -> TimeSeriesTable:
    """Remove long-term demand trends.

    ``per-year-mean-rescale`` multiplies every calendar year's demand (per
    bus) so its mean equals the whole-sample mean. Wind is left untouched.
    """
    if method == "none":
        return table
    if method != "per-year-mean-rescale":
        raise ValueError(f"unknown detrend method {method!r}")
    if not table.full_years():
        raise InsufficientData("per-year-mean-rescale needs at least one full calendar year")
    years = table.years()
    demand = np.array(table.demand)
    overall = demand.mean(axis=1)
    for y in np.unique(years):
        sel = years == y
        year_mean = demand[:, sel].mean(axis=1)
        factor = np.divide(overall, year_mean, out=np.ones_like(overall), where=year_mean > 0)
        demand[:, sel] *= factor[:, None]
    return table.with_demand(demand)


# ---------------------------------------------------------------------------
# Calendar blocks

@dataclass(frozen=True, slots=True)
class CalendarMonth:
    year: int
    month: int
    start_index: int
    length_hours: int

    kind = "month"

    @property
    def stratum(self) -> int:
        return self.month

    def to_dict(self) -> dict:
        return {"kind": "month", "year": self.year, "month": self.month,
                "start_index": self.start_index, "length_hours": self.length_hours}


@dataclass(frozen=True, slots=True)
class SeasonWeek:
    season: str
    start: str  # ISO timestamp of the block's first hour
    start_index: int
    length_hours: int = HOURS_PER_WEEK

    kind = "week"

    @property
    def stratum(self) -> str:
        return self.season

    def to_dict(self) -> dict:
        return {"kind": "week", "season": self.season, "start": self.start,
                "start_index": self.start_index, "length_hours": self.length_hours}


CalendarBlock = CalendarMonth | SeasonWeek


def block_from_dict(d: dict) -> CalendarBlock:
    if d["kind"] == "month":
        return CalendarMonth(int(d["year"]), int(d["month"]), int(d["start_index"]), int(d["length_hours"]))
    if d["kind"] == "week":
        return SeasonWeek(str(d["season"]), str(d["start"]), int(d["start_index"]), int(d["length_hours"]))
    raise ValueError(f"unknown block kind {d['kind']!r}")


@dataclass(frozen=True)
class BlockIndex:
    months: dict[int, list[CalendarMonth]]
    weeks: dict[str, list[SeasonWeek]]


def _row_of(ts: np.ndarray, when: np.datetime64) -> int | None:
    i = int(np.searchsorted(ts, when))
    if i < ts.size and ts[i] == when:
        return i
    return None


def _span_ok(ts: np.ndarray, start: np.datetime64, length: int) -> int | None:
    """Row index of ``start`` if the ``length`` following rows are contiguous in time."""
    i = _row_of(ts, start)
    if i is None or i + length > ts.size:
        return None
    # Neither month nor season-week blocks can contain a (dropped) Feb 29.
    if ts[i + length - 1] == start + (length - 1) * ONE_HOUR:
        return i
    return None


def _season_start(season: str, season_year: int) -> dt.date:
    if season == "DJF":
        return dt.date(season_year - 1, 12, 1)
    return dt.date(season_year, {"MAM": 3, "JJA": 6, "SON": 9}[season], 1)


def _season_end(season: str, season_year: int) -> dt.date:
    """First day after the season."""
    if season == "DJF":
        return dt.date(season_year, 3, 1)
    return dt.date(season_year, {"MAM": 6, "JJA": 9, "SON": 12}[season], 1)


def index_blocks(table: TimeSeriesTable) -> BlockIndex:
    """Enumerate whole calendar months and season-week tiles in the table.

    Week tiles are non-overlapping 168 h windows laid from each season's
    first midnight; trailing days that do not fill a week are unused.
    December belongs to the following winter.
    """
    ts = table.timestamps
    months: dict[int, list[CalendarMonth]] = {m: [] for m in range(1, 13)}
    weeks: dict[str, list[SeasonWeek]] = {s: [] for s in SEASONS}
    if ts.size == 0:
        return BlockIndex(months, weeks)
    first = ts[0].astype(dt.datetime)
    last = ts[-1].astype(dt.datetime)

    for year in range(first.year, last.year + 1):
        for month in range(1, 13):
            start = np.datetime64(dt.datetime(year, month, 1), "h")
            i = _span_ok(ts, start, MONTH_HOURS[month])
            if i is not None:
                months[month].append(CalendarMonth(year, month, i, MONTH_HOURS[month]))

    for season_year in range(first.year, last.year + 2):
        for season in SEASONS:
            day = _season_start(season, season_year)
            end = _season_end(season, season_year)
            while day + dt.timedelta(days=7) <= end:
                start = np.datetime64(dt.datetime(day.year, day.month, day.day), "h")
                i = _span_ok(ts, start, HOURS_PER_WEEK)
                if i is not None:
                    weeks[season].append(SeasonWeek(season, str(start), i))
                day += dt.timedelta(days=7)
    return BlockIndex(months, weeks)


def extract(table: TimeSeriesTable, block: CalendarBlock) -> TimeSeriesTable:
    """Contiguous copy of the rows covered by ``block``."""
    start, n = block.start_index, block.length_hours
    if start < 0 or n <= 0 or start + n > len(table):
        raise OutOfRange(f"block {block} outside table of length {len(table)}")
    return table.slice(start, start + n)


def split_years(table: TimeSeriesTable) -> list[TimeSeriesTable]:
    """One table per full calendar year, in chronological order."""
    years = table.years()
    out = []
    for y in table.full_years():
        rows = np.flatnonzero(years == y)
        out.append(table.slice(int(rows[0]), int(rows[-1]) + 1))
    return out
