"""Normalized failure traces: the CUA CSV format, raw-source ingestion, merging.

A CUA file holds the failures of one service seen from one vantage point,
named ``cua_<service>_<vantage>.csv``::

    start_time,end_time,severity
    1594600000,1594607200,1.000000

Times are integer Unix seconds with an exclusive end; severity has six
decimals. Lines end with LF.
"""
from __future__ import annotations

import csv
import enum
import os
import re
import tempfile
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .extract import FailureRange
from .severity import OperatorLabel, SeverityScale, operator_severity, severity
from .timeseries import TimeSeries, Unit

HEADER = "start_time,end_time,severity"


class Vantage(enum.Enum):
    USER_REPORTS = "userreports"
    OPERATOR_REPORTS = "operatorreports"
    PLAYER_COUNTS = "playercounts"


# source-site names used by the published archive's file names
VANTAGE_ALIASES = {
    "outagereport": Vantage.USER_REPORTS,
    "downdetector": Vantage.USER_REPORTS,
    "statuspage": Vantage.OPERATOR_REPORTS,
    "operator": Vantage.OPERATOR_REPORTS,
    "players": Vantage.PLAYER_COUNTS,
}


class TraceFormatError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class FailureEvent:
    start: int
    end: int
    severity: float

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError(f"failure must end after it starts: ({self.start}, {self.end})")
        if not 0.0 <= self.severity <= 1.0:
            raise ValueError(f"severity {self.severity} outside [0, 1]")

    @property
    def duration(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class CuaTrace:
    service: str
    vantage: Vantage
    events: tuple[FailureEvent, ...] = field(default=())

    def __post_init__(self):
        events = tuple(self.events)
        for a, b in zip(events, events[1:]):
            if b.start < a.start:
                raise ValueError(f"events are not sorted by start: {a} before {b}")
            if a.end > b.start:
                raise ValueError(f"failures overlap: {a} and {b}")
        object.__setattr__(self, "events", events)

    def __len__(self):
        return len(self.events)

    @property
    def filename(self) -> str:
        return f"cua_{sanitize(self.service)}_{self.vantage.value}.csv"


@dataclass(frozen=True)
class RawOperatorReport:
    start: int
    end: int
    label: OperatorLabel
    services: tuple[str, ...]
    description: str = ""

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError(f"operator report must end after it starts: ({self.start}, {self.end})")
        if not self.services:
            raise ValueError("operator report lists no affected services")


def sanitize(name: str) -> str:
    return re.sub(r"[^a-z0-9]", "_", name.lower())


def merge_overlaps(events) -> list[FailureEvent]:
    """Union of overlapping or touching failures; the merged severity is the max."""
    merged: list[list] = []
    for e in sorted(events, key=lambda e: (e.start, e.end)):
        if merged and e.start <= merged[-1][1]:
            last = merged[-1]
            last[1] = max(last[1], e.end)
            last[2] = max(last[2], e.severity)
        else:
            merged.append([e.start, e.end, e.severity])
    return [FailureEvent(s, t, v) for s, t, v in merged]


def format_cua(trace: CuaTrace) -> str:
    lines = [HEADER]
    lines += [f"{e.start},{e.end},{e.severity:.6f}" for e in trace.events]
    return "\n".join(lines) + "\n"


def atomic_write_text(path: Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_cua(trace: CuaTrace, directory) -> Path:
    directory = Path(directory)
    path = directory / trace.filename
    try:
        directory.mkdir(parents=True, exist_ok=True)
        atomic_write_text(path, format_cua(trace))
    except OSError as exc:
        raise OSError(f"cannot write CUA trace to {path}: {exc}") from exc
    return path


def parse_filename(path) -> tuple[str, Vantage]:
    name = Path(path).name
    m = re.fullmatch(r"cua_(.+)_([a-z]+)\.csv", name)
    if not m:
        raise TraceFormatError(f"{name}: expected a file named cua_<service>_<vantage>.csv")
    token = m.group(2)
    try:
        return m.group(1), VANTAGE_ALIASES.get(token) or Vantage(token)
    except ValueError:
        raise TraceFormatError(f"{name}: unknown vantage {token!r}") from None


def read_cua(path, lenient: bool = False) -> CuaTrace:
    """Parse a CUA file. Overlapping failures are an error unless ``lenient``."""
    path = Path(path)
    service, vantage = parse_filename(path)
    text = path.read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0].strip() != HEADER:
        raise TraceFormatError(f"{path}:1: expected header {HEADER!r}")
    events = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.strip().split(",")
        if len(parts) != 3:
            raise TraceFormatError(f"{path}:{lineno}: expected 3 fields, got {len(parts)}")
        try:
            events.append(FailureEvent(int(parts[0]), int(parts[1]), float(parts[2])))
        except ValueError as exc:
            raise TraceFormatError(f"{path}:{lineno}: {exc}") from None
    if lenient:
        events = merge_overlaps(events)
    try:
        return CuaTrace(service, vantage, tuple(events))
    except ValueError as exc:
        raise TraceFormatError(f"{path}: {exc}") from None


def parse_timestamp(text: str) -> int:
    """Integer epoch seconds or ISO-8601 (naive times are taken as UTC)."""
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        pass
    try:
        value = float(text)
        if value.is_integer():
            return int(value)
    except ValueError:
        pass
    dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


class ReportFormat(enum.Enum):
    TIMESTAMP_COUNT = "timestamp,count"
    TIMESTAMP_COUNT_REASON = "timestamp,count,reason"


def _rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        for rowno, row in enumerate(csv.reader(fh), start=1):
            if row and any(cell.strip() for cell in row):
                yield rowno, row


def _is_header(row) -> bool:
    try:
        parse_timestamp(row[0])
        return False
    except ValueError:
        return True


def ingest_user_reports(
    path,
    fmt: ReportFormat = ReportFormat.TIMESTAMP_COUNT,
    interval: int = 1200,
    unit: Unit = Unit.USER_REPORTS,
) -> TimeSeries:
    """Regularize a ``timestamp,count[,reason]`` file onto a fixed grid.

    Rows falling into the same grid slot are summed with a warning; slots
    without any row are flagged missing.
    """
    ncols = 3 if fmt is ReportFormat.TIMESTAMP_COUNT_REASON else 2
    samples = []
    first = True
    for rowno, row in _rows(path):
        if first and _is_header(row):
            first = False
            continue
        first = False
        if len(row) < ncols:
            raise TraceFormatError(f"{path}: row {rowno}: expected {ncols} columns, got {len(row)}")
        try:
            t = parse_timestamp(row[0])
        except ValueError:
            raise TraceFormatError(f"{path}: row {rowno}: unparseable timestamp {row[0]!r}") from None
        try:
            count = float(row[1])
        except ValueError:
            raise TraceFormatError(f"{path}: row {rowno}: invalid count {row[1]!r}") from None
        if count < 0 or not np.isfinite(count):
            raise TraceFormatError(f"{path}: row {rowno}: count must be a non-negative number")
        samples.append((t, count))

    if not samples:
        return TimeSeries(0, interval, np.zeros(0), unit)
    samples.sort(key=lambda s: s[0])
    start = samples[0][0]
    slots = [(t - start) // interval for t, _ in samples]
    n = slots[-1] + 1
    values = np.zeros(n)
    seen = np.zeros(n, dtype=bool)
    for slot, (t, count) in zip(slots, samples):
        if seen[slot]:
            warnings.warn(
                f"{path}: several rows fall into the slot starting at "
                f"{start + slot * interval}; counts summed",
                stacklevel=2,
            )
        values[slot] += count
        seen[slot] = True
    return TimeSeries(start, interval, values, unit, ~seen)


def ingest_operator_reports(path) -> list[RawOperatorReport]:
    """CSV with header ``start,end,label,services,description``; services are ``;``-joined."""
    reports = []
    first = True
    for rowno, row in _rows(path):
        if first and _is_header(row):
            first = False
            continue
        first = False
        if len(row) < 4:
            raise TraceFormatError(f"{path}: row {rowno}: expected at least 4 columns")
        try:
            start, end = parse_timestamp(row[0]), parse_timestamp(row[1])
            label = OperatorLabel.parse(row[2])
            services = tuple(s.strip() for s in row[3].split(";") if s.strip())
            description = ",".join(row[4:]).strip()
            reports.append(RawOperatorReport(start, end, label, services, description))
        except ValueError as exc:
            raise TraceFormatError(f"{path}: row {rowno}: {exc}") from None
    return reports


def operator_reports_to_trace(
    reports, total_services: int, service: str = "operator"
) -> CuaTrace:
    events = [
        FailureEvent(r.start, r.end, operator_severity(r.label, len(r.services), total_services))
        for r in reports
    ]
    return CuaTrace(service, Vantage.OPERATOR_REPORTS, tuple(merge_overlaps(events)))


def ranges_to_trace(
    ranges: list[FailureRange], ts: TimeSeries, scale: SeverityScale | None, service: str, vantage: Vantage
) -> CuaTrace:
    """Sample ranges to epoch-second events; the end is the boundary after ``end_index``."""
    if ranges and scale is None:
        raise ValueError("a severity scale is required to convert failure ranges")
    events = [
        FailureEvent(
            ts.start_epoch + r.start_index * ts.interval,
            ts.start_epoch + (r.end_index + 1) * ts.interval,
            severity(r.summit, scale),
        )
        for r in ranges
    ]
    return CuaTrace(service, vantage, tuple(merge_overlaps(events)))


def trace_from_rows(rows, service="trace", vantage=Vantage.USER_REPORTS) -> CuaTrace:
    """Convenience constructor from ``(start, end, severity)`` tuples."""
    return CuaTrace(service, vantage, tuple(FailureEvent(*r) for r in rows))
