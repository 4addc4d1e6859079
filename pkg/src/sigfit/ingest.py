"""ECDC daily case-distribution CSV ingestion and per-group cumulative series."""

from __future__ import annotations

import csv
import datetime as dt
import io
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from sigfit.errors import BelowThreshold, CorruptFeed, SchemaError, TransformDomainError, UnknownGroup
from sigfit.estimation import GroupObservations
from sigfit.growth import TransformKind, transform_apply

REQUIRED_COLUMNS = (
    "dateRep", "day", "month", "year", "cases", "deaths",
    "countriesAndTerritories", "geoId", "countryterritoryCode",
    "popData2019", "continentExp",
)
MAX_REJECT_FRACTION = 0.05
DEFAULT_TRIM = 100

FIXTURE_PATH = Path(__file__).with_name("data") / "ecdc_fixture_2020-06-15.csv"

# label -> (selector kind, key); eleven countries and Africa as one continent
DEFAULT_GROUPS = {
    "Australia": ("country", "AU"),
    "China": ("country", "CN"),
    "France": ("country", "FR"),
    "Germany": ("country", "DE"),
    "Italy": ("country", "IT"),
    "Russia": ("country", "RU"),
    "Spain": ("country", "ES"),
    "UK": ("country", "UK"),
    "USA": ("country", "US"),
    "Brazil": ("country", "BR"),
    "India": ("country", "IN"),
    "Africa": ("continent", "Africa"),
}


@dataclass(frozen=True)
class DailyRecord:
    date: dt.date
    cases: int
    deaths: int
    geo_id: str
    country_name: str
    population: int | None
    continent: str


@dataclass(frozen=True)
class Reject:
    line: int
    reason: str


@dataclass
class ParsedFeed:
    """Records parsed from one feed plus the rows that were rejected."""

    records: list = field(default_factory=list)
    rejects: list = field(default_factory=list)

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)


@dataclass(frozen=True)
class GroupSelector:
    label: str
    kind: str  # "country" or "continent"
    key: str

    def matches(self, rec: DailyRecord) -> bool:
        if self.kind == "continent":
            return rec.continent == self.key
        return rec.geo_id == self.key


@dataclass(frozen=True)
class GroupSeries:
    group_id: str
    origin: dt.date
    dates: tuple
    cumulative: np.ndarray
    trimmed_prefix: int

    def __len__(self):
        return len(self.dates)


# ---------------------------------------------------------------------------
# CSV parsing
# ---------------------------------------------------------------------------

def _open_text(source):
    if isinstance(source, (str, os.PathLike)):
        return open(source, newline="", encoding="utf-8-sig"), True
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8-sig"), newline=""), True
    if isinstance(source, io.TextIOBase):
        return source, False
    # binary stream (file opened "rb", sys.stdin.buffer, BytesIO)
    return io.TextIOWrapper(source, encoding="utf-8-sig", newline=""), False


def _parse_row(row) -> DailyRecord:
    date_text = row["dateRep"].strip()
    try:
        day, month, year = (int(p) for p in date_text.split("/"))
        date = dt.date(year, month, day)
    except ValueError:
        raise ValueError(f"bad dateRep {date_text!r}") from None
    for col, val in (("day", date.day), ("month", date.month), ("year", date.year)):
        if row[col].strip() and int(row[col]) != val:
            raise ValueError(f"{col} column disagrees with dateRep {date_text!r}")
    cases_text = row["cases"].strip()
    if not cases_text:
        raise ValueError("empty cases field")
    deaths_text = row["deaths"].strip()
    if not deaths_text:
        raise ValueError("empty deaths field")
    geo_id = row["geoId"].strip()
    if not geo_id:
        raise ValueError("empty geoId")
    pop_text = row["popData2019"].strip()
    return DailyRecord(
        date=date,
        cases=int(cases_text),
        deaths=int(deaths_text),
        geo_id=geo_id,
        country_name=row["countriesAndTerritories"].strip(),
        population=int(pop_text) if pop_text else None,
        continent=row["continentExp"].strip(),
    )


def parse_csv(source) -> ParsedFeed:
    """Parse an ECDC case-distribution CSV from a path, bytes or stream.

    Malformed rows are collected in ``rejects``; more than 5% rejected rows
    raises ``CorruptFeed``.
    """
    fh, close = _open_text(source)
    try:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise SchemaError(missing)
        feed = ParsedFeed()
        n_rows = 0
        for row in reader:
            n_rows += 1
            try:
                if None in row.values():
                    raise ValueError("short row")
                feed.records.append(_parse_row(row))
            except ValueError as exc:
                feed.rejects.append(Reject(reader.line_num, str(exc)))
    finally:
        if close:
            fh.close()
    if n_rows and len(feed.rejects) > MAX_REJECT_FRACTION * n_rows:
        raise CorruptFeed(f"{len(feed.rejects)} of {n_rows} rows rejected "
                          f"(first: line {feed.rejects[0].line}, {feed.rejects[0].reason})")
    return feed


# ---------------------------------------------------------------------------
# Group series
# ---------------------------------------------------------------------------

def _norm(name: str) -> str:
    return name.strip().lower().replace("_", " ")


def resolve_group(name: str, records) -> GroupSelector:
    """Map a group name onto a selector.

    Accepts the preset labels (``USA``, ``UK``, ``Africa``...), continent names,
    ECDC geo ids and ``countriesAndTerritories`` names (case-insensitive).
    """
    if name in DEFAULT_GROUPS:
        kind, key = DEFAULT_GROUPS[name]
        return GroupSelector(name, kind, key)
    wanted = _norm(name)
    continents = {_norm(r.continent): r.continent for r in records}
    if wanted in continents:
        return GroupSelector(name, "continent", continents[wanted])
    for r in records:
        if r.geo_id.lower() == wanted or _norm(r.country_name) == wanted:
            return GroupSelector(name, "country", r.geo_id)
    raise UnknownGroup(f"unknown group {name!r}: no matching continent, geoId or country name")


def build_group(records, selector, trim_threshold: int = DEFAULT_TRIM,
                as_of: dt.date | None = None) -> GroupSeries:
    """Daily cumulative series for one country or a whole continent.

    Negative daily counts (feed corrections) are clamped to zero, days missing
    from the feed count as zero new cases, and leading days with cumulative
    count below ``trim_threshold`` are dropped.
    """
    if trim_threshold < 1:
        raise ValueError("trim_threshold must be at least 1")
    if isinstance(selector, str):
        selector = resolve_group(selector, records)
    daily: dict[dt.date, int] = {}
    for rec in records:
        if selector.matches(rec) and (as_of is None or rec.date <= as_of):
            daily[rec.date] = daily.get(rec.date, 0) + max(rec.cases, 0)
    if not daily:
        raise UnknownGroup(f"no records for group {selector.label!r}"
                           + (f" up to {as_of}" if as_of else ""))
    first, last = min(daily), max(daily)
    n_days = (last - first).days + 1
    dates = [first + dt.timedelta(days=i) for i in range(n_days)]
    counts = np.array([daily.get(d, 0) for d in dates], dtype=np.int64)
    cumulative = np.cumsum(counts)
    keep = np.flatnonzero(cumulative >= trim_threshold)
    if keep.size == 0:
        raise BelowThreshold(f"group {selector.label!r} never reaches {trim_threshold} cumulative cases")
    start = int(keep[0])
    return GroupSeries(
        group_id=selector.label,
        origin=dates[start],
        dates=tuple(dates[start:]),
        cumulative=cumulative[start:].copy(),
        trimmed_prefix=start,
    )


def to_observations(g: GroupSeries, k: TransformKind) -> GroupObservations:
    """Day index from the group's origin and the transformed cumulative counts."""
    y = g.cumulative.astype(float)
    if k.kind == "log10" and np.any(y <= 0):
        bad = int(np.flatnonzero(y <= 0)[0])
        raise TransformDomainError(f"log10 of zero cumulative count for {g.group_id} on {g.dates[bad]}")
    z = transform_apply(k, y, where=g.group_id)
    return GroupObservations(g.group_id, np.arange(y.size, dtype=float), np.atleast_1d(z))
