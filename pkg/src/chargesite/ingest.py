"""OD trip record parsing and cleaning.

Input is a header-prefixed CSV with one row per taxi trip::

    vehicle_id,o_time,o_lon,o_lat,d_time,d_lon,d_lat,distance_km
    B1234,20160504 08:45:35,116.4915,39.6175,20160504 09:03:07,116.4331,39.8042,22.365

Either endpoint's coordinate pair may be left blank to mark a missing GPS
fix; :func:`clean` then tries to reconstruct it from the vehicle's adjacent
trips.
"""

from __future__ import annotations

import csv
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from typing import IO, Iterable, Mapping

from .errors import IngestError
from .geo import FIFTH_RING, BoundingBox, GeoPoint

logger = logging.getLogger(__name__)

TIME_FORMAT = "%Y%m%d %H:%M:%S"
COLUMNS = ("vehicle_id", "o_time", "o_lon", "o_lat", "d_time", "d_lon", "d_lat", "distance_km")


@dataclass(frozen=True)
class OdRecord:
    """One taxi trip. ``o`` or ``d`` is None when that GPS fix is missing."""

    vehicle_id: str
    o_time: datetime
    o: GeoPoint | None
    d_time: datetime
    d: GeoPoint | None
    distance_km: float

    def __post_init__(self):
        if not self.o_time < self.d_time:
            raise ValueError("o_time must precede d_time")
        if not (math.isfinite(self.distance_km) and self.distance_km > 0):
            raise ValueError(f"distance_km must be positive and finite, got {self.distance_km}")

    @property
    def complete(self) -> bool:
        return self.o is not None and self.d is not None


@dataclass(frozen=True)
class ParseError:
    line: int
    message: str


@dataclass
class CleaningParams:
    max_silence_min: float = 5.0
    sanity_box: BoundingBox = field(default_factory=lambda: FIFTH_RING.expanded(0.25))


@dataclass
class CleaningReport:
    """Tally of what :func:`clean` did.

    An interpolated record replaces its incomplete original, so every
    incomplete input record is counted in ``dropped_missing`` and each
    successful reconstruction adds one to ``interpolated``. This keeps
    ``retained == parsed + interpolated - dropped_missing - dropped_duplicate``.
    """

    parsed: int = 0
    interpolated: int = 0
    dropped_missing: int = 0
    clamped_drift: int = 0
    dropped_duplicate: int = 0
    retained: int = 0

    def to_text(self) -> str:
        keys = ("parsed", "interpolated", "dropped_missing", "clamped_drift",
                "dropped_duplicate", "retained")
        return "".join(f"{k} = {getattr(self, k)}\n" for k in keys)


def format_time(t: datetime) -> str:
    return t.strftime(TIME_FORMAT)


def parse_time(text: str) -> datetime:
    return datetime.strptime(text.strip(), TIME_FORMAT)


def _parse_point(lon_text: str, lat_text: str) -> GeoPoint | None:
    lon_text, lat_text = lon_text.strip(), lat_text.strip()
    if not lon_text or not lat_text:
        return None
    return GeoPoint(float(lon_text), float(lat_text))


def parse_records(
    stream: IO[str], schema: Mapping[str, str] | None = None
) -> tuple[list[OdRecord], list[ParseError]]:
    """Read OD records from a CSV stream.

    ``schema`` maps canonical column names (see ``COLUMNS``) to the header
    names used in the file; unmapped columns keep their canonical name.
    Malformed rows are skipped and reported with their 1-based line number.

    Raises:
        IngestError: the stream cannot be read or lacks a mandatory column.
    """
    schema = dict(schema or {})
    try:
        reader = csv.reader(stream)
        header = next(reader, None)
    except (OSError, UnicodeDecodeError, csv.Error) as exc:
        raise IngestError(f"unreadable stream: {exc}") from exc
    if header is None:
        raise IngestError("unreadable stream: no header row")
    header = [h.strip() for h in header]
    index = {}
    for col in COLUMNS:
        name = schema.get(col, col)
        if name not in header:
            raise IngestError(f"missing mandatory column '{name}'")
        index[col] = header.index(name)

    records: list[OdRecord] = []
    errors: list[ParseError] = []
    try:
        for row in reader:
            line = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                vals = {col: row[i] for col, i in index.items()}
            except IndexError:
                errors.append(ParseError(line, f"expected {len(header)} fields, got {len(row)}"))
                continue
            try:
                vid = vals["vehicle_id"].strip()
                if not vid:
                    raise ValueError("empty vehicle_id")
                rec = OdRecord(
                    vehicle_id=vid,
                    o_time=parse_time(vals["o_time"]),
                    o=_parse_point(vals["o_lon"], vals["o_lat"]),
                    d_time=parse_time(vals["d_time"]),
                    d=_parse_point(vals["d_lon"], vals["d_lat"]),
                    distance_km=float(vals["distance_km"]),
                )
            except ValueError as exc:
                errors.append(ParseError(line, str(exc)))
                continue
            records.append(rec)
    except (OSError, UnicodeDecodeError, csv.Error) as exc:
        raise IngestError(f"unreadable stream: {exc}") from exc
    return records, errors


def write_records(records: Iterable[OdRecord], stream: IO[str]) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in records:
        o = ("", "") if r.o is None else (repr(r.o.lon), repr(r.o.lat))
        d = ("", "") if r.d is None else (repr(r.d.lon), repr(r.d.lat))
        w.writerow([r.vehicle_id, format_time(r.o_time), *o, format_time(r.d_time), *d,
                    repr(r.distance_km)])


def _lerp(a: GeoPoint, ta: datetime, b: GeoPoint, tb: datetime, t: datetime) -> GeoPoint:
    span = (tb - ta).total_seconds()
    f = 0.0 if span <= 0 else (t - ta).total_seconds() / span
    return GeoPoint(a.lon + f * (b.lon - a.lon), a.lat + f * (b.lat - a.lat))


def _repair(rec: OdRecord, prev: OdRecord | None, nxt: OdRecord | None,
            max_silence: timedelta) -> OdRecord | None:
    """Rebuild a single missing endpoint from the adjacent trips, or None."""
    if rec.o is None and rec.d is None:
        return None
    if rec.o is None:
        if prev is None or prev.d is None:
            return None
        gap = rec.o_time - prev.d_time
        if gap < timedelta(0) or gap > max_silence:
            return None
        return replace(rec, o=_lerp(prev.d, prev.d_time, rec.d, rec.d_time, rec.o_time))
    if nxt is None or nxt.o is None:
        return None
    gap = nxt.o_time - rec.d_time
    if gap < timedelta(0) or gap > max_silence:
        return None
    return replace(rec, d=_lerp(rec.o, rec.o_time, nxt.o, nxt.o_time, rec.d_time))


def clean(records: list[OdRecord], params: CleaningParams | None = None
          ) -> tuple[list[OdRecord], CleaningReport]:
    """Apply missing-data repair, drift clamping and de-duplication, in that order.

    A record with one missing endpoint is linearly interpolated (in time)
    between its own known endpoint and the nearest fix of the adjacent trip
    of the same vehicle, provided that trip's fix is present and the silence
    between them is at most ``max_silence_min``. Anything else incomplete is
    dropped. Complete records are never dropped for silence. Coordinates
    outside ``sanity_box`` are clamped onto it. Exact duplicates keep their
    first occurrence. Output preserves input order.
    """
    params = params or CleaningParams()
    report = CleaningReport(parsed=len(records))
    max_silence = timedelta(minutes=params.max_silence_min)

    by_vehicle: dict[str, list[int]] = defaultdict(list)
    for idx, r in enumerate(records):
        by_vehicle[r.vehicle_id].append(idx)

    repaired: list[OdRecord | None] = list(records)
    for idxs in by_vehicle.values():
        idxs.sort(key=lambda i: (records[i].o_time, records[i].d_time, i))
        for pos, i in enumerate(idxs):
            rec = records[i]
            if rec.complete:
                continue
            prev = records[idxs[pos - 1]] if pos > 0 else None
            nxt = records[idxs[pos + 1]] if pos + 1 < len(idxs) else None
            fixed = _repair(rec, prev, nxt, max_silence)
            report.dropped_missing += 1
            if fixed is not None:
                report.interpolated += 1
            repaired[i] = fixed

    box = params.sanity_box
    out: list[OdRecord] = []
    seen: set[OdRecord] = set()
    for rec in repaired:
        if rec is None:
            continue
        o, d = box.clamp(rec.o), box.clamp(rec.d)
        if o is not rec.o or d is not rec.d:
            report.clamped_drift += 1
            rec = replace(rec, o=o, d=d)
        if rec in seen:
            report.dropped_duplicate += 1
            continue
        seen.add(rec)
        out.append(rec)

    report.retained = len(out)
    logger.debug("cleaning: %s", report)
    return out, report


def group_by_vehicle(records: Iterable[OdRecord]) -> dict[str, list[OdRecord]]:
    """Partition records by vehicle, each list sorted by origin time.

    Keys are inserted in sorted vehicle_id order so iteration is deterministic.
    """
    groups: dict[str, list[OdRecord]] = defaultdict(list)
    for r in records:
        groups[r.vehicle_id].append(r)
    return {
        vid: sorted(groups[vid], key=lambda r: (r.o_time, r.d_time))
        for vid in sorted(groups)
    }
