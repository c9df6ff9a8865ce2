"""Parsing of surveillance CSV exports into per-region daily/cumulative series."""

from __future__ import annotations

import csv
import io
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date

import numpy as np

log = logging.getLogger(__name__)

WIDE = "wide-cumulative"
LONG = "long-daily"


class IngestError(ValueError):
    """Raised for malformed or inconsistent input data."""


@dataclass(frozen=True)
class Revision:
    """A negative step in a cumulative series that was clamped to zero daily."""

    region_id: str
    kind: str
    date: date
    drop: int


@dataclass(frozen=True, eq=False)
class RegionSeries:
    region_id: str
    dates: np.ndarray  # datetime64[D], contiguous
    daily_cases: np.ndarray
    cum_cases: np.ndarray
    daily_deaths: np.ndarray
    cum_deaths: np.ndarray
    population: int
    revisions: tuple[Revision, ...] = field(default=(), compare=False)

    def __post_init__(self):
        for name in ("dates", "daily_cases", "cum_cases", "daily_deaths", "cum_deaths"):
            arr = np.array(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        self.validate()

    def __len__(self) -> int:
        return len(self.dates)

    def __eq__(self, other):
        if not isinstance(other, RegionSeries):
            return NotImplemented
        return (
            self.region_id == other.region_id
            and self.population == other.population
            and all(
                np.array_equal(getattr(self, f), getattr(other, f))
                for f in ("dates", "daily_cases", "cum_cases", "daily_deaths", "cum_deaths")
            )
        )

    __hash__ = None

    def validate(self) -> None:
        n = len(self.dates)
        for name in ("daily_cases", "cum_cases", "daily_deaths", "cum_deaths"):
            arr = getattr(self, name)
            if len(arr) != n:
                raise IngestError(f"{self.region_id}: {name} has length {len(arr)}, expected {n}")
            if np.any(arr < 0):
                raise IngestError(f"{self.region_id}: negative values in {name}")
        if self.population < 1:
            raise IngestError(f"{self.region_id}: population must be >= 1")
        if n > 1:
            steps = np.diff(self.dates).astype(int)
            if np.any(steps != 1):
                raise IngestError(f"{self.region_id}: dates are not contiguous daily")
        for daily, cum in ((self.daily_cases, self.cum_cases), (self.daily_deaths, self.cum_deaths)):
            if n > 1 and not np.array_equal(cum[1:] - cum[:-1], daily[1:]):
                raise IngestError(f"{self.region_id}: cumulative and daily counts disagree")

    @property
    def weekdays(self) -> np.ndarray:
        """Weekday per date, Monday=0 .. Sunday=6."""
        return weekday_of(self.dates)

    @property
    def last_date(self) -> np.datetime64:
        return self.dates[-1]

    def truncate(self, end: np.datetime64 | date | str) -> "RegionSeries":
        """The series restricted to dates on or before ``end``."""
        end = np.datetime64(end, "D")
        keep = self.dates <= end
        return RegionSeries(
            region_id=self.region_id,
            dates=self.dates[keep],
            daily_cases=self.daily_cases[keep],
            cum_cases=self.cum_cases[keep],
            daily_deaths=self.daily_deaths[keep],
            cum_deaths=self.cum_deaths[keep],
            population=self.population,
            revisions=tuple(r for r in self.revisions if np.datetime64(r.date, "D") <= end),
        )

    @classmethod
    def from_daily(cls, region_id, start, daily_cases, daily_deaths, population, cum_offset=(0, 0)):
        """Build a series from daily counts; cumulatives are prefix sums plus an offset."""
        daily_cases = np.asarray(daily_cases, dtype=np.int64)
        daily_deaths = np.asarray(daily_deaths, dtype=np.int64)
        dates = np.datetime64(start, "D") + np.arange(len(daily_cases))
        return cls(
            region_id=region_id,
            dates=dates,
            daily_cases=daily_cases,
            cum_cases=daily_to_cumulative(daily_cases) + cum_offset[0],
            daily_deaths=daily_deaths,
            cum_deaths=daily_to_cumulative(daily_deaths) + cum_offset[1],
            population=int(population),
        )


def weekday_of(dates) -> np.ndarray:
    # 1970-01-01 was a Thursday (weekday 3).
    days = np.asarray(dates, dtype="datetime64[D]").astype(np.int64)
    return (days + 3) % 7


def cumulative_to_daily(cum) -> tuple[np.ndarray, np.ndarray]:
    """First differences with a day-0 seed, negative steps clamped to 0.

    Returns ``(daily, clamped)`` where ``clamped`` holds the indices whose
    difference was negative.
    """
    cum = np.asarray(cum, dtype=np.int64)
    if cum.size == 0:
        raise ValueError("cumulative series must have length >= 1")
    daily = np.empty_like(cum)
    daily[0] = cum[0]
    diffs = np.diff(cum)
    daily[1:] = np.maximum(diffs, 0)
    clamped = np.flatnonzero(diffs < 0) + 1
    return daily, clamped


def daily_to_cumulative(daily) -> np.ndarray:
    return np.cumsum(np.asarray(daily, dtype=np.int64))


def _parse_int(text: str, row: int, col: str) -> int:
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise IngestError(f"malformed number {text!r} at row {row}, column {col!r}") from None
    if not np.isfinite(value) or value != int(value):
        raise IngestError(f"malformed number {text!r} at row {row}, column {col!r}")
    if value < 0:
        raise IngestError(f"negative count {text!r} at row {row}, column {col!r}")
    return int(value)


def _parse_date(text: str, row: int) -> date:
    try:
        return date.fromisoformat(text.strip())
    except ValueError:
        raise IngestError(f"malformed date {text!r} at row {row}") from None


def _reader(raw: str) -> csv.DictReader:
    reader = csv.DictReader(io.StringIO(raw.lstrip("﻿")))
    if reader.fieldnames is None:
        raise IngestError("CSV has no header row")
    reader.fieldnames = [f.strip() for f in reader.fieldnames]
    return reader


def parse_population(raw: str) -> dict[str, int]:
    reader = _reader(raw)
    if not {"region", "population"} <= set(reader.fieldnames):
        raise IngestError("population table needs columns region,population")
    out = {}
    for i, rec in enumerate(reader, start=2):
        pop = _parse_int(rec["population"], i, "population")
        if pop < 1:
            raise IngestError(f"population must be >= 1 at row {i}")
        out[rec["region"].strip()] = pop
    return out


def _check_contiguous(region: str, dates: list[date]) -> None:
    gaps = []
    for a, b in zip(dates, dates[1:]):
        if (b - a).days != 1:
            gaps.append(f"{a.isoformat()}..{b.isoformat()}")
    if gaps:
        raise IngestError(f"{region}: non-contiguous dates, gaps after " + ", ".join(gaps))


def _parse_wide(raw: str, kind: str) -> dict[str, tuple[list[date], list[int]]]:
    reader = _reader(raw)
    fields = reader.fieldnames
    if "region" not in fields:
        raise IngestError("wide layout needs a 'region' column")
    date_cols = []
    for col in fields:
        if col == "region":
            continue
        try:
            date_cols.append((date.fromisoformat(col), col))
        except ValueError:
            continue  # metadata columns (lat, lon, ...) are ignored
    if not date_cols:
        raise IngestError("wide layout has no ISO date columns")
    date_cols.sort()
    dates = [d for d, _ in date_cols]
    out = {}
    for i, rec in enumerate(reader, start=2):
        region = rec["region"].strip()
        if region in out:
            raise IngestError(f"duplicate {kind} row for region {region!r} at row {i}")
        out[region] = (dates, [_parse_int(rec[c], i, c) for _, c in date_cols])
    return out


def _parse_long(raw: str) -> dict[str, list[tuple[date, int, int]]]:
    reader = _reader(raw)
    need = {"region", "date", "cases", "deaths"}
    if not need <= set(reader.fieldnames):
        raise IngestError("long layout needs columns region,date,cases,deaths")
    rows = defaultdict(list)
    for i, rec in enumerate(reader, start=2):
        rows[rec["region"].strip()].append(
            (_parse_date(rec["date"], i), _parse_int(rec["cases"], i, "cases"), _parse_int(rec["deaths"], i, "deaths"))
        )
    return rows


def parse_timeseries(
    raw: str,
    layout: str,
    populations: dict[str, int] | str,
    deaths_raw: str | None = None,
) -> list[RegionSeries]:
    """Parse CSV text into one :class:`RegionSeries` per region, sorted by region id.

    ``layout`` is ``"long-daily"`` (columns region,date,cases,deaths) or
    ``"wide-cumulative"`` (one row per region, ISO date columns holding
    cumulative counts). The wide layout takes cases in ``raw`` and deaths in
    ``deaths_raw``. ``populations`` is a mapping or the text of a
    region,population CSV.
    """
    if isinstance(populations, str):
        populations = parse_population(populations)

    series = []
    if layout == LONG:
        for region, rows in _parse_long(raw).items():
            rows.sort(key=lambda r: r[0])
            dates = [r[0] for r in rows]
            if len(set(dates)) != len(dates):
                raise IngestError(f"{region}: duplicate dates")
            _check_contiguous(region, dates)
            cases = np.array([r[1] for r in rows], dtype=np.int64)
            deaths = np.array([r[2] for r in rows], dtype=np.int64)
            series.append((region, dates, cases, daily_to_cumulative(cases), deaths, daily_to_cumulative(deaths), ()))
    elif layout == WIDE:
        if deaths_raw is None:
            raise IngestError("wide layout requires a deaths table")
        cases_tab = _parse_wide(raw, "cases")
        deaths_tab = _parse_wide(deaths_raw, "deaths")
        missing = set(cases_tab) ^ set(deaths_tab)
        if missing:
            raise IngestError(f"regions present in only one of cases/deaths: {sorted(missing)}")
        for region, (dates, cum_c) in cases_tab.items():
            d_dates, cum_d = deaths_tab[region]
            if d_dates != dates:
                raise IngestError(f"{region}: cases and deaths tables have different dates")
            _check_contiguous(region, dates)
            revisions = []
            pieces = []
            for kind, cum in (("cases", cum_c), ("deaths", cum_d)):
                daily, clamped = cumulative_to_daily(cum)
                for idx in clamped:
                    drop = int(cum[idx - 1] - cum[idx])
                    revisions.append(Revision(region, kind, dates[idx], drop))
                    log.warning("%s: negative %s revision of %d on %s clamped to 0", region, kind, drop, dates[idx])
                # cumulatives are rebuilt from clamped dailies so they stay consistent
                pieces.append((daily, daily_to_cumulative(daily)))
            (dc, cc), (dd, cd) = pieces
            series.append((region, dates, dc, cc, dd, cd, tuple(revisions)))
    else:
        raise IngestError(f"unknown layout {layout!r}; expected {LONG!r} or {WIDE!r}")

    if not series:
        raise IngestError("no regions parsed")

    out = []
    for region, dates, dc, cc, dd, cd, revisions in sorted(series, key=lambda s: s[0]):
        if region not in populations:
            raise IngestError(f"region {region!r} missing from population table")
        out.append(
            RegionSeries(
                region_id=region,
                dates=np.array(dates, dtype="datetime64[D]"),
                daily_cases=dc,
                cum_cases=cc,
                daily_deaths=dd,
                cum_deaths=cd,
                population=populations[region],
                revisions=revisions,
            )
        )
    return out


def series_to_long_csv(series: list[RegionSeries]) -> str:
    """Inverse of the long-daily parser; handy for fixtures and scripts."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["region", "date", "cases", "deaths"])
    for s in series:
        for d, c, k in zip(s.dates, s.daily_cases, s.daily_deaths):
            w.writerow([s.region_id, str(d), int(c), int(k)])
    return buf.getvalue()


def population_csv(series: list[RegionSeries]) -> str:
    lines = ["region,population"] + [f"{s.region_id},{s.population}" for s in series]
    return "\n".join(lines) + "\n"

