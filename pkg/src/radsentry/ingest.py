"""Safecast "Daily export" CSV parsing and µSv/h filtering."""
from __future__ import annotations

import calendar
import csv
import io
import logging
import math
import re
import time
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, TextIO

logger = logging.getLogger(__name__)

DEFAULT_COLUMNS = {
    "captured_time": "Captured Time",
    "latitude": "Latitude",
    "longitude": "Longitude",
    "value": "Value",
    "unit": "Unit",
    "device_id": "Device ID",
    "uploaded_time": "Uploaded Time",
}

DEFAULT_UNITS = ("usv", "µSv/h", "usv/h", "uSv/h")

READING_COLUMNS = (
    "captured_unix",
    "latitude",
    "longitude",
    "value_usv_h",
    "device_id",
    "uploaded_unix",
)

_TS_RE = re.compile(
    r"^(\d{4})-(\d{2})-(\d{2}) (\d{2}):(\d{2}):(\d{2})(?:\.(\d{1,6}))?$"
)


class SchemaError(ValueError):
    """The export header lacks a required column."""


class TimestampError(ValueError):
    pass


@dataclass(frozen=True)
class RawRecord:
    captured_time: str
    latitude: float
    longitude: float
    value: float
    unit: str
    device_id: str
    uploaded_time: str


@dataclass(frozen=True)
class RadiationReading:
    captured_unix: float
    latitude: float
    longitude: float
    value_usv_h: float
    device_id: str
    uploaded_unix: float


@dataclass
class IngestReport:
    rows_read: int = 0
    rows_kept: int = 0
    rows_dropped_malformed: int = 0
    rows_dropped_unit: int = 0

    def reconciles(self) -> bool:
        return self.rows_read == (
            self.rows_kept + self.rows_dropped_malformed + self.rows_dropped_unit
        )


def to_unix_timestamp(text: str) -> float:
    """Convert ``yyyy-mm-dd hh:mm:ss[.fff]`` (UTC) to seconds since the epoch."""
    m = _TS_RE.match(text.strip())
    if m is None:
        raise TimestampError(f"unparseable timestamp {text!r}")
    year, month, day, hour, minute, second = (int(g) for g in m.groups()[:6])
    frac = m.group(7) or "0"
    try:
        whole = calendar.timegm((year, month, day, hour, minute, second, 0, 0, 0))
        # timegm normalizes out-of-range fields silently; reject them instead
        if time.gmtime(whole)[:6] != (year, month, day, hour, minute, second):
            raise ValueError
    except (ValueError, OverflowError):
        raise TimestampError(f"invalid calendar timestamp {text!r}") from None
    return whole + int(frac) / 10 ** len(frac)


def format_unix_timestamp(seconds: float) -> str:
    """Inverse of :func:`to_unix_timestamp` at millisecond precision."""
    millis = int(round(seconds * 1000.0))
    whole, ms = divmod(millis, 1000)
    tm = time.gmtime(whole)
    return time.strftime("%Y-%m-%d %H:%M:%S", tm) + f".{ms:03d}"


def _resolve_header(header: Sequence[str], columns: Mapping[str, str]) -> dict[str, int]:
    positions = {name.strip(): i for i, name in enumerate(header)}
    out = {}
    for key, name in columns.items():
        if name not in positions:
            raise SchemaError(f"missing required column {name!r}")
        out[key] = positions[name]
    return out


def parse_export(
    stream: TextIO,
    columns: Mapping[str, str] | None = None,
) -> tuple[list[RawRecord], IngestReport]:
    """Parse an export stream into raw records.

    Malformed data rows (wrong field count, unparseable or out-of-range
    coordinates, unparseable value, empty unit) are counted in the report
    and skipped.
    """
    columns = dict(DEFAULT_COLUMNS if columns is None else columns)
    reader = csv.reader(stream)
    report = IngestReport()
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("empty export: no header row") from None
    header = [h.lstrip("﻿") for h in header]
    pos = _resolve_header(header, columns)

    records = []
    for row in reader:
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        report.rows_read += 1
        if len(row) != len(header):
            report.rows_dropped_malformed += 1
            continue
        try:
            lat = float(row[pos["latitude"]])
            lon = float(row[pos["longitude"]])
            value = float(row[pos["value"]])
        except ValueError:
            report.rows_dropped_malformed += 1
            continue
        unit = row[pos["unit"]].strip()
        if not (
            unit
            and math.isfinite(value)
            and -90.0 <= lat <= 90.0
            and -180.0 <= lon <= 180.0
        ):
            report.rows_dropped_malformed += 1
            continue
        records.append(
            RawRecord(
                captured_time=row[pos["captured_time"]].strip(),
                latitude=lat,
                longitude=lon,
                value=value,
                unit=unit,
                device_id=row[pos["device_id"]].strip(),
                uploaded_time=row[pos["uploaded_time"]].strip(),
            )
        )
    report.rows_kept = len(records)
    return records, report


def filter_radiation(
    records: Iterable[RawRecord],
    units: Iterable[str] = DEFAULT_UNITS,
    report: IngestReport | None = None,
) -> list[RadiationReading]:
    """Keep µSv/h records and convert their timestamps.

    When ``report`` is given it is updated in place: rows moved from
    ``rows_kept`` to ``rows_dropped_unit`` or ``rows_dropped_malformed``.
    """
    accepted = {u.casefold() for u in units}
    out = []
    for rec in records:
        if rec.unit.casefold() not in accepted:
            if report is not None:
                report.rows_kept -= 1
                report.rows_dropped_unit += 1
            continue
        try:
            if rec.value < 0:
                raise ValueError("negative dose rate")
            captured = to_unix_timestamp(rec.captured_time)
            uploaded = to_unix_timestamp(rec.uploaded_time)
        except ValueError:
            if report is not None:
                report.rows_kept -= 1
                report.rows_dropped_malformed += 1
            continue
        out.append(
            RadiationReading(
                captured_unix=captured,
                latitude=rec.latitude,
                longitude=rec.longitude,
                value_usv_h=rec.value,
                device_id=rec.device_id,
                uploaded_unix=uploaded,
            )
        )
    return out


def ingest_file(path, columns=None, units=DEFAULT_UNITS):
    with open(path, newline="", encoding="utf-8") as fh:
        records, report = parse_export(fh, columns)
    readings = filter_radiation(records, units, report)
    logger.info("ingested %s: %s", path, report)
    return readings, report


def write_readings(readings: Sequence[RadiationReading], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(READING_COLUMNS)
        for r in readings:
            writer.writerow(
                [
                    repr(r.captured_unix),
                    repr(r.latitude),
                    repr(r.longitude),
                    repr(r.value_usv_h),
                    r.device_id,
                    repr(r.uploaded_unix),
                ]
            )


def read_readings(path) -> list[RadiationReading]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(READING_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise SchemaError(f"missing required column {sorted(missing)[0]!r}")
        return [
            RadiationReading(
                captured_unix=float(row["captured_unix"]),
                latitude=float(row["latitude"]),
                longitude=float(row["longitude"]),
                value_usv_h=float(row["value_usv_h"]),
                device_id=row["device_id"],
                uploaded_unix=float(row["uploaded_unix"]),
            )
            for row in reader
        ]


def parse_text(text: str, columns=None):
    """Convenience wrapper for in-memory exports (tests, notebooks)."""
    return parse_export(io.StringIO(text), columns)
