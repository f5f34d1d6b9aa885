"""Hospitalization CSV ingestion, national aggregation and stock/flow reconciliation.

Two raw layouts are understood:

* Belgian (Sciensano) -- one row per province and day with ``DATE``,
  ``TOTAL_IN`` (census), ``NEW_IN`` (intakes) and ``NEW_OUT`` (discharges).
* French (data.gouv.fr) -- one row per department, sex stratum and day with
  ``jour``, ``hosp`` (census) and cumulative ``rad``/``dc`` counts.

Both end up as an :class:`ObservedSeries` of daily ``(h, e, l)`` triples. After
:func:`reconcile_flows` the identity ``h[t] = h[t-1] + e[t] - l[t]`` holds for
every ``t > 0``, i.e. ``e[t]`` and ``l[t]`` are the flows that move the census
from day ``t-1`` to day ``t``.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import BinaryIO, Iterable, Literal, Optional, TextIO, Union

import numpy as np

__all__ = [
    "DataError",
    "SchemaError",
    "RowParseError",
    "ContiguityError",
    "EmptyDataError",
    "InsufficientDataError",
    "ObservedSeries",
    "RawRecordSet",
    "parse_belgium_csv",
    "parse_france_csv",
    "aggregate_national",
    "reconcile_flows",
    "load_series",
    "read_series_csv",
    "write_series_csv",
    "format_float",
]

Schema = Literal["belgium", "france"]
Source = Union[bytes, str, BinaryIO, TextIO]

BELGIUM_COLUMNS = ("DATE", "TOTAL_IN", "NEW_IN", "NEW_OUT")
FRANCE_COLUMNS = ("dep", "sexe", "jour", "hosp", "rad", "dc")


class DataError(ValueError):
    """Base class for ingestion failures."""


class SchemaError(DataError):
    pass


class RowParseError(DataError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ContiguityError(DataError):
    pass


class EmptyDataError(DataError):
    pass


class InsufficientDataError(DataError):
    pass


def format_float(x: float) -> str:
    """Shortest string that round-trips ``x`` exactly."""
    return repr(float(x))


@dataclass(frozen=True)
class ObservedSeries:
    start_date: dt.date
    h: np.ndarray
    e: np.ndarray
    l: np.ndarray
    label: str = ""

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float)
        e = np.asarray(self.e, dtype=float)
        l = np.asarray(self.l, dtype=float)
        if not (h.ndim == e.ndim == l.ndim == 1):
            raise DataError("h, e, l must be one-dimensional")
        if not (h.size == e.size == l.size):
            raise DataError(f"h, e, l lengths differ: {h.size}, {e.size}, {l.size}")
        if h.size < 2:
            raise InsufficientDataError("a series needs at least two days")
        if not (np.all(np.isfinite(h)) and np.all(np.isfinite(e)) and np.all(np.isfinite(l))):
            raise DataError("series contains non-finite values")
        if np.any(h < 0):
            raise DataError("hospital census must be non-negative")
        for name, arr in (("h", h), ("e", e), ("l", l)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return int(self.h.size)

    @property
    def dates(self) -> list[dt.date]:
        return [self.start_date + dt.timedelta(days=k) for k in range(len(self))]

    @property
    def end_date(self) -> dt.date:
        return self.date_at(len(self) - 1)

    def date_at(self, index: int) -> dt.date:
        return self.start_date + dt.timedelta(days=int(index))

    def index_of(self, day: dt.date) -> int:
        return (day - self.start_date).days

    def stock_flow_residual(self) -> np.ndarray:
        """``h[t] - h[t-1] - e[t] + l[t]`` for ``t >= 1``."""
        return self.h[1:] - self.h[:-1] - self.e[1:] + self.l[1:]


@dataclass(frozen=True)
class RawRecordSet:
    """Per-region rows as they appear in the source file."""

    schema: Schema
    dates: tuple[dt.date, ...] = ()
    regions: tuple[str, ...] = ()
    # belgium: h, e, l -- france: h, rad, dc (cumulative)
    columns: dict[str, np.ndarray] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.dates)

    @property
    def distinct_dates(self) -> list[dt.date]:
        return sorted(set(self.dates))

    def between(self, first: Optional[dt.date] = None, last: Optional[dt.date] = None) -> "RawRecordSet":
        """Rows dated within ``[first, last]`` (either bound may be open)."""
        keep = [
            k
            for k, d in enumerate(self.dates)
            if (first is None or d >= first) and (last is None or d <= last)
        ]
        return RawRecordSet(
            schema=self.schema,
            dates=tuple(self.dates[k] for k in keep),
            regions=tuple(self.regions[k] for k in keep),
            columns={name: col[keep] for name, col in self.columns.items()},
        )


def _read_text(raw: Source) -> str:
    if isinstance(raw, bytes):
        return raw.decode("utf-8-sig")
    if isinstance(raw, str):
        return raw
    data = raw.read()
    if isinstance(data, bytes):
        return data.decode("utf-8-sig")
    return data


def _parse_date(text: str, line: int) -> dt.date:
    try:
        # date.fromisoformat in 3.10 only accepts YYYY-MM-DD, which is the contract
        return dt.date.fromisoformat(text.strip())
    except ValueError:
        raise RowParseError(line, f"unparseable date {text!r}") from None


def _parse_count(text: str, column: str, line: int) -> float:
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise RowParseError(line, f"unparseable {column} value {text!r}") from None
    if not math.isfinite(value):
        raise RowParseError(line, f"non-finite {column} value {text!r}")
    return value


def _reader(text: str, delimiters: str) -> csv.DictReader:
    header = text.split("\n", 1)[0]
    delimiter = max(delimiters, key=header.count)
    return csv.DictReader(io.StringIO(text), delimiter=delimiter)


def _require(reader: csv.DictReader, required: Iterable[str]) -> None:
    fields = [f.strip() for f in (reader.fieldnames or [])]
    missing = [c for c in required if c not in fields]
    if missing:
        raise SchemaError(f"missing required column(s): {', '.join(missing)}")
    reader.fieldnames = fields


def parse_belgium_csv(raw: Source) -> RawRecordSet:
    """Parse a Sciensano hospitalisation CSV; one record per input row."""
    reader = _reader(_read_text(raw), ",")
    _require(reader, BELGIUM_COLUMNS)
    dates, regions, h, e, l = [], [], [], [], []
    for row in reader:
        line = reader.line_num
        dates.append(_parse_date(row["DATE"], line))
        regions.append((row.get("PROVINCE") or "").strip())
        h.append(_parse_count(row["TOTAL_IN"], "TOTAL_IN", line))
        e.append(_parse_count(row["NEW_IN"], "NEW_IN", line))
        l.append(_parse_count(row["NEW_OUT"], "NEW_OUT", line))
    return RawRecordSet(
        schema="belgium",
        dates=tuple(dates),
        regions=tuple(regions),
        columns={"h": np.array(h, float), "e": np.array(e, float), "l": np.array(l, float)},
    )


def parse_france_csv(raw: Source) -> RawRecordSet:
    """Parse a data.gouv.fr hospital CSV, keeping only the all-sexes stratum (sexe = 0)."""
    reader = _reader(_read_text(raw), ";,")
    _require(reader, FRANCE_COLUMNS)
    dates, regions, hosp, rad, dc = [], [], [], [], []
    for row in reader:
        line = reader.line_num
        if row["sexe"].strip() != "0":
            continue
        dates.append(_parse_date(row["jour"], line))
        regions.append(row["dep"].strip())
        hosp.append(_parse_count(row["hosp"], "hosp", line))
        rad.append(_parse_count(row["rad"], "rad", line))
        dc.append(_parse_count(row["dc"], "dc", line))
    return RawRecordSet(
        schema="france",
        dates=tuple(dates),
        regions=tuple(regions),
        columns={"h": np.array(hosp, float), "rad": np.array(rad, float), "dc": np.array(dc, float)},
    )


def aggregate_national(records: RawRecordSet, label: str = "") -> ObservedSeries:
    """Sum region rows per date into a national (not yet reconciled) series.

    For the French layout the cumulative ``rad + dc`` total is first-differenced
    into daily discharges, which drops the first day.
    """
    if len(records) == 0:
        raise EmptyDataError("no records to aggregate")
    names = list(records.columns)
    sums: dict[dt.date, np.ndarray] = defaultdict(lambda: np.zeros(len(names)))
    stacked = np.column_stack([records.columns[n] for n in names])
    for day, values in zip(records.dates, stacked):
        sums[day] += values
    days = sorted(sums)
    span = (days[-1] - days[0]).days + 1
    if span != len(days):
        present = set(days)
        gaps = [days[0] + dt.timedelta(k) for k in range(span) if days[0] + dt.timedelta(k) not in present]
        raise ContiguityError(f"date range has {len(gaps)} missing day(s), first {gaps[0].isoformat()}")
    table = {n: np.array([sums[d][k] for d in days]) for k, n in enumerate(names)}
    label = label or records.schema

    if records.schema == "belgium":
        return ObservedSeries(days[0], table["h"], table["e"], table["l"], label)

    cumulative = table["rad"] + table["dc"]
    if len(days) < 3:
        raise InsufficientDataError("French aggregation needs at least three days")
    l = np.diff(cumulative)
    return ObservedSeries(days[1], table["h"][1:], np.zeros_like(l), l, label)


def reconcile_flows(series: ObservedSeries, schema: Schema) -> ObservedSeries:
    """Redefine one flow so that the stock/flow identity holds exactly.

    belgium: ``l[t] := h[t-1] - h[t] + e[t]``; france: ``e[t] := h[t] - h[t-1] + l[t]``.
    Flows at index 0 are set to 0. Reconciled discharges may be negative.
    """
    if len(series) < 2:
        raise InsufficientDataError("reconciliation needs at least two days")
    h = series.h
    e = series.e.copy()
    l = series.l.copy()
    dh = h[1:] - h[:-1]
    if schema == "belgium":
        l[1:] = e[1:] - dh
    elif schema == "france":
        e[1:] = dh + l[1:]
    else:
        raise SchemaError(f"unknown schema {schema!r}")
    e[0] = 0.0
    l[0] = 0.0
    return replace(series, e=e, l=l)


def load_series(
    path: Union[str, Path],
    schema: str,
    first: Optional[dt.date] = None,
    last: Optional[dt.date] = None,
) -> ObservedSeries:
    """Read ``path`` in the given layout and return a reconciled national series.

    ``first``/``last`` restrict the raw rows before aggregation. ``schema`` may
    also be ``"series"`` for the canonical ``date,H,E,L`` layout, read verbatim.
    """
    path = Path(path)
    raw = path.read_bytes()
    if schema == "series":
        if first is not None or last is not None:
            raise DataError("date restriction is not supported for canonical series files")
        return read_series_csv(raw, label=path.name)
    if schema == "belgium":
        records = parse_belgium_csv(raw)
    elif schema == "france":
        records = parse_france_csv(raw)
    else:
        raise SchemaError(f"unknown schema {schema!r}")
    records = records.between(first, last)
    return reconcile_flows(aggregate_national(records, label=path.name), schema)


def write_series_csv(series: ObservedSeries, out: Union[str, Path, TextIO]) -> None:
    rows = [("date", "H", "E", "L")]
    for k, day in enumerate(series.dates):
        rows.append(
            (day.isoformat(), format_float(series.h[k]), format_float(series.e[k]), format_float(series.l[k]))
        )
    if isinstance(out, (str, Path)):
        with open(out, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(rows)
    else:
        csv.writer(out, lineterminator="\n").writerows(rows)


def read_series_csv(raw: Source, label: str = "") -> ObservedSeries:
    reader = _reader(_read_text(raw), ",")
    _require(reader, ("date", "H", "E", "L"))
    dates, h, e, l = [], [], [], []
    for row in reader:
        line = reader.line_num
        dates.append(_parse_date(row["date"], line))
        h.append(_parse_count(row["H"], "H", line))
        e.append(_parse_count(row["E"], "E", line))
        l.append(_parse_count(row["L"], "L", line))
    if not dates:
        raise EmptyDataError("series file has no rows")
    for k in range(1, len(dates)):
        if (dates[k] - dates[k - 1]).days != 1:
            raise ContiguityError(f"non-contiguous dates at {dates[k].isoformat()}")
    return ObservedSeries(dates[0], np.array(h), np.array(e), np.array(l), label)
