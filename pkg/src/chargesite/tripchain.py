"""Trip-chain construction and charging-demand extraction.

A fully charged taxi serves consecutive trips until the next one would push
the accumulated distance to the battery range. Each such run of trips is a
trip-chain, and both of its endpoints become charging demand points.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from datetime import datetime, time, timedelta
from typing import IO, Iterable, Mapping, Sequence

from .geo import (DEFAULT_RINGS, DEFAULT_SCALE, DegreeScale, GeoPoint, RingConfig, RingZone,
                  manhattan_km, zone_of)
from .ingest import OdRecord, format_time, parse_time

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ChainParams:
    max_gap_min: float = 5.0
    max_link_km: float = 0.5
    range_cap_km: float = 150.0

    def __post_init__(self):
        if not (self.max_gap_min > 0 and self.max_link_km > 0 and self.range_cap_km > 0):
            raise ValueError("chain parameters must be strictly positive")


@dataclass(frozen=True)
class TripChain:
    vehicle_id: str
    trips: tuple[OdRecord, ...]
    total_km: float

    @property
    def start(self) -> GeoPoint:
        return self.trips[0].o

    @property
    def start_time(self) -> datetime:
        return self.trips[0].o_time

    @property
    def end(self) -> GeoPoint:
        return self.trips[-1].d

    @property
    def end_time(self) -> datetime:
        return self.trips[-1].d_time


@dataclass(frozen=True)
class DemandPoint:
    id: int
    location: GeoPoint
    zone: RingZone
    time: datetime
    weight: float = 1.0
    chain_id: int = -1
    end: str = "O"  # "O" for chain start, "D" for chain end

    def __post_init__(self):
        if not self.weight > 0:
            raise ValueError("demand weight must be positive")


def can_link(prev: OdRecord, nxt: OdRecord, params: ChainParams,
             scale: DegreeScale = DEFAULT_SCALE) -> bool:
    """Time-gap and proximity conditions for appending ``nxt`` after ``prev``."""
    gap = nxt.o_time - prev.d_time
    if gap < timedelta(0) or gap > timedelta(minutes=params.max_gap_min):
        return False
    return manhattan_km(prev.d, nxt.o, scale) <= params.max_link_km


def _chains_for_vehicle(vid: str, trips: Sequence[OdRecord], params: ChainParams,
                        scale: DegreeScale) -> list[TripChain]:
    chains = []
    current: list[OdRecord] = []
    total = 0.0
    for trip in trips:
        if trip.distance_km >= params.range_cap_km:
            # cannot be served on one charge; skipped and closes the running chain
            logger.warning("vehicle %s: trip of %.3f km exceeds range cap, skipped",
                           vid, trip.distance_km)
            if current:
                chains.append(TripChain(vid, tuple(current), total))
                current, total = [], 0.0
            continue
        if (current and can_link(current[-1], trip, params, scale)
                and total + trip.distance_km < params.range_cap_km):
            current.append(trip)
            total += trip.distance_km
            continue
        if current:
            chains.append(TripChain(vid, tuple(current), total))
        current, total = [trip], trip.distance_km
    if current:
        chains.append(TripChain(vid, tuple(current), total))
    return chains


def build_chains(per_vehicle: Mapping[str, Sequence[OdRecord]], params: ChainParams | None = None,
                 scale: DegreeScale = DEFAULT_SCALE) -> list[TripChain]:
    """Greedily link each vehicle's time-sorted trips into chains.

    A trip extends the open chain only if it starts within ``max_gap_min``
    after the previous drop-off (never before it), its origin lies within
    ``max_link_km`` of that drop-off, and the chain total stays strictly below
    ``range_cap_km``. Otherwise the chain closes and the trip starts a new one.
    Vehicles are processed in sorted id order.
    """
    params = params or ChainParams()
    chains: list[TripChain] = []
    for vid in sorted(per_vehicle):
        chains.extend(_chains_for_vehicle(vid, per_vehicle[vid], params, scale))
    return chains


def filter_chains(chains: Iterable[TripChain], min_total_km: float = 0.0,
                  windows: Sequence[tuple[time, time]] | None = None,
                  exclude_windows: Sequence[tuple[time, time]] | None = None,
                  max_count: int | None = None) -> list[TripChain]:
    """Keep chains by length and by when their trips happen.

    With ``windows`` every trip of a kept chain must start inside one of them;
    with ``exclude_windows`` no trip may start inside any of them. ``max_count``
    truncates the (ordered) result.
    """
    out = []
    for c in chains:
        if c.total_km < min_total_km:
            continue
        if windows and not all(in_windows(t.o_time, windows) for t in c.trips):
            continue
        if exclude_windows and any(in_windows(t.o_time, exclude_windows) for t in c.trips):
            continue
        out.append(c)
        if max_count is not None and len(out) >= max_count:
            break
    return out


def in_windows(t: datetime, windows: Sequence[tuple[time, time]]) -> bool:
    """Whether the time of day of ``t`` falls in any half-open [start, end) window.

    A window whose end precedes its start wraps past midnight.
    """
    tod = t.time()
    for start, end in windows:
        if start <= end:
            if start <= tod < end:
                return True
        elif tod >= start or tod < end:
            return True
    return False


def extract_demand(chains: Sequence[TripChain], rings: RingConfig = DEFAULT_RINGS) -> list[DemandPoint]:
    """Two demand points per chain, at its start and at its end, each with weight 1."""
    points = []
    for cid, c in enumerate(chains):
        for end, loc, t in (("O", c.start, c.start_time), ("D", c.end, c.end_time)):
            points.append(DemandPoint(id=len(points), location=loc, zone=zone_of(loc, rings),
                                      time=t, weight=1.0, chain_id=cid, end=end))
    return points


def write_chains(chains: Sequence[TripChain], stream: IO[str]) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["chain_id", "vehicle_id", "n_trips", "total_km", "start_lon", "start_lat",
                "start_time", "end_lon", "end_lat", "end_time"])
    for cid, c in enumerate(chains):
        w.writerow([cid, c.vehicle_id, len(c.trips), repr(c.total_km),
                    repr(c.start.lon), repr(c.start.lat), format_time(c.start_time),
                    repr(c.end.lon), repr(c.end.lat), format_time(c.end_time)])


DEMAND_COLUMNS = ("id", "lon", "lat", "weight", "zone", "time", "chain_id", "end")


def write_demand(points: Sequence[DemandPoint], stream: IO[str]) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(DEMAND_COLUMNS)
    for p in points:
        w.writerow([p.id, repr(p.location.lon), repr(p.location.lat), repr(p.weight),
                    p.zone.value, format_time(p.time), p.chain_id, p.end])


def read_demand(stream: IO[str]) -> list[DemandPoint]:
    out = []
    for row in csv.DictReader(stream):
        out.append(DemandPoint(
            id=int(row["id"]),
            location=GeoPoint(float(row["lon"]), float(row["lat"])),
            zone=RingZone(row["zone"]),
            time=parse_time(row["time"]),
            weight=float(row["weight"]),
            chain_id=int(row["chain_id"]),
            end=row["end"],
        ))
    return out
