"""Equivalent-distance matrix between demand points and candidate sites."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import time
from typing import IO, Sequence

import numpy as np

from .cluster import CandidateStation
from .errors import EmptyInstanceError
from .geo import DEFAULT_RINGS, DEFAULT_SCALE, DegreeScale, RingConfig, RingZone
from .tripchain import DemandPoint, in_windows

RUSH_HOURS = ((time(7, 0), time(9, 0)), (time(18, 0), time(20, 0)))


@dataclass(frozen=True)
class CongestionPolicy:
    """Rush-hour slowdown factors keyed on ring zone.

    Windows are half-open daily intervals [start, end).
    """

    rings: RingConfig = DEFAULT_RINGS
    windows: tuple[tuple[time, time], ...] = RUSH_HOURS
    sigma_inner3: float = 1.5
    sigma_ring34: float = 1.2
    sigma_other: float = 1.0

    def __post_init__(self):
        for s in (self.sigma_inner3, self.sigma_ring34, self.sigma_other):
            if not s >= 1.0:
                raise ValueError(f"congestion factors must be >= 1, got {s}")


NEUTRAL = CongestionPolicy(sigma_inner3=1.0, sigma_ring34=1.0, sigma_other=1.0)


def sigma_for(point: DemandPoint, policy: CongestionPolicy) -> float:
    if in_windows(point.time, policy.windows):
        if point.zone is RingZone.INNER3:
            return policy.sigma_inner3
        if point.zone is RingZone.RING3TO4:
            return policy.sigma_ring34
    return policy.sigma_other


@dataclass
class CostMatrix:
    """``d[i, j]`` in equivalent km; rows follow ``demand_ids``, columns ``candidate_ids``."""

    d: np.ndarray
    weights: np.ndarray
    demand_ids: tuple[int, ...] = field(default=())
    candidate_ids: tuple[int, ...] = field(default=())

    def __post_init__(self):
        self.d = np.asarray(self.d, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.d.ndim != 2 or self.d.shape[0] == 0 or self.d.shape[1] == 0:
            raise EmptyInstanceError()
        if self.weights.shape != (self.d.shape[0],):
            raise ValueError("weights must have one entry per demand row")
        if not np.all(np.isfinite(self.d)) or np.any(self.d < 0):
            raise ValueError("distances must be finite and non-negative")
        if not self.demand_ids:
            self.demand_ids = tuple(range(self.d.shape[0]))
        if not self.candidate_ids:
            self.candidate_ids = tuple(range(self.d.shape[1]))
        if len(self.demand_ids) != self.d.shape[0] or len(self.candidate_ids) != self.d.shape[1]:
            raise ValueError("id maps do not match matrix shape")
        if any(a >= b for a, b in zip(self.candidate_ids, self.candidate_ids[1:])):
            raise ValueError("candidate ids must increase along the columns")

    @property
    def n_demand(self) -> int:
        return self.d.shape[0]

    @property
    def n_candidates(self) -> int:
        return self.d.shape[1]

    def scaled(self, c: float) -> "CostMatrix":
        return CostMatrix(self.d * c, self.weights.copy(), self.demand_ids, self.candidate_ids)


def build_cost_matrix(demand: Sequence[DemandPoint], candidates: Sequence[CandidateStation],
                      policy: CongestionPolicy | None = None,
                      scale: DegreeScale = DEFAULT_SCALE) -> CostMatrix:
    """Congestion-weighted Manhattan distances, ``d_ij = sigma_i * L1(i, j)``.

    Raises:
        EmptyInstanceError: no demand points or no candidates.
    """
    if not demand or not candidates:
        raise EmptyInstanceError()
    dlon = np.array([p.location.lon for p in demand])
    dlat = np.array([p.location.lat for p in demand])
    clon = np.array([c.location.lon for c in candidates])
    clat = np.array([c.location.lat for c in candidates])
    # same operation order as geo.manhattan_km so unweighted entries match it bit for bit
    d = np.abs(dlat[:, None] - clat[None, :]) * scale.lat_km + np.abs(dlon[:, None] - clon[None, :]) * scale.lon_km
    if policy is not None:
        sigma = np.array([sigma_for(p, policy) for p in demand])
        d = d * sigma[:, None]
    return CostMatrix(
        d=d,
        weights=np.array([p.weight for p in demand], dtype=float),
        demand_ids=tuple(p.id for p in demand),
        candidate_ids=tuple(c.id for c in candidates),
    )


def write_cost_matrix(matrix: CostMatrix, stream: IO[str]) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["i_id", "j_id", "d_ij"])
    for r, i in enumerate(matrix.demand_ids):
        for c, j in enumerate(matrix.candidate_ids):
            w.writerow([i, j, repr(float(matrix.d[r, c]))])
