"""K-means clustering of demand points into candidate station sites."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import IO, Sequence

import numpy as np

from .geo import DEFAULT_SCALE, DegreeScale, GeoPoint

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CandidateStation:
    id: int
    location: GeoPoint
    member_count: int


@dataclass(frozen=True)
class KmeansParams:
    k: int = 100
    seed: int | None = None
    max_iters: int = 100
    tol: float = 1e-6  # squared km

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


@dataclass
class KmeansResult:
    centroids: np.ndarray  # (k, 2) lon, lat degrees
    labels: np.ndarray
    counts: np.ndarray
    inertia_history: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def _coords(points) -> np.ndarray:
    locs = [getattr(p, "location", p) for p in points]
    return np.array([(p.lon, p.lat) for p in locs], dtype=float).reshape(-1, 2)


def _sq_dist(x: np.ndarray, c: np.ndarray, scale: DegreeScale) -> np.ndarray:
    dx = (x[:, None, 0] - c[None, :, 0]) * scale.lon_km
    dy = (x[:, None, 1] - c[None, :, 1]) * scale.lat_km
    return dx * dx + dy * dy


def _plus_plus(x: np.ndarray, k: int, rng: np.random.Generator, scale: DegreeScale) -> np.ndarray:
    n = len(x)
    chosen = [int(rng.integers(n))]
    d2 = _sq_dist(x, x[chosen], scale)[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        idx = int(rng.choice(n, p=d2 / total))
        chosen.append(idx)
        d2 = np.minimum(d2, _sq_dist(x, x[idx:idx + 1], scale)[:, 0])
    return x[chosen].copy()


def _assign(x, c, scale):
    d2 = _sq_dist(x, c, scale)
    labels = np.argmin(d2, axis=1)
    return labels, d2[np.arange(len(x)), labels]


def _repair_empty(x, c, labels, d2, k):
    """Move each empty cluster's centroid onto the point farthest from its own centroid."""
    counts = np.bincount(labels, minlength=k)
    for j in np.flatnonzero(counts == 0):
        movable = counts[labels] > 1
        cand = np.where(movable, d2, -1.0)
        p = int(np.argmax(cand))
        counts[labels[p]] -= 1
        c[j] = x[p]
        labels[p] = j
        d2[p] = 0.0
        counts[j] = 1
    return counts


def kmeans(points: Sequence, params: KmeansParams, scale: DegreeScale = DEFAULT_SCALE) -> KmeansResult:
    """Lloyd iterations from k-means++ seeds, in km-scaled planar coordinates.

    ``points`` may be GeoPoints or anything with a ``location`` GeoPoint.
    Iteration stops once no centroid moves by ``tol`` squared km or more, or
    after ``max_iters`` rounds.

    Raises:
        ValueError: fewer distinct points than ``k``, or no seed given.
    """
    if params.seed is None:
        raise ValueError("k-means needs an explicit seed")
    x = _coords(points)
    k = params.k
    if len(np.unique(x, axis=0)) < k:
        raise ValueError("k exceeds distinct points")
    rng = np.random.default_rng(params.seed)
    c = _plus_plus(x, k, rng, scale)

    history: list[float] = []
    converged = False
    it = 0
    for it in range(1, params.max_iters + 1):
        labels, d2 = _assign(x, c, scale)
        counts = _repair_empty(x, c, labels, d2, k)
        inertia = float(d2.sum())
        if history and inertia > history[-1] * (1 + 1e-12) + 1e-12:
            raise RuntimeError(f"k-means inertia increased: {history[-1]} -> {inertia}")
        history.append(inertia)
        new = np.column_stack([
            np.bincount(labels, weights=x[:, 0], minlength=k) / counts,
            np.bincount(labels, weights=x[:, 1], minlength=k) / counts,
        ])
        shift = ((new[:, 0] - c[:, 0]) * scale.lon_km) ** 2 + ((new[:, 1] - c[:, 1]) * scale.lat_km) ** 2
        c = new
        if float(shift.max()) < params.tol:
            converged = True
            break

    labels, d2 = _assign(x, c, scale)
    counts = _repair_empty(x, c, labels, d2, k)
    history.append(float(d2.sum()))
    logger.debug("k-means: k=%d iterations=%d converged=%s inertia=%.6g",
                 k, it, converged, history[-1])
    return KmeansResult(c, labels, counts, history, it, converged)


def candidate_set(points: Sequence, params: KmeansParams,
                  scale: DegreeScale = DEFAULT_SCALE) -> list[CandidateStation]:
    """Cluster ``points`` and number the centroids 0..k-1 in (lat, lon) order."""
    res = kmeans(points, params, scale)
    order = sorted(range(params.k), key=lambda j: (res.centroids[j, 1], res.centroids[j, 0]))
    return [
        CandidateStation(id=new_id,
                         location=GeoPoint(float(res.centroids[j, 0]), float(res.centroids[j, 1])),
                         member_count=int(res.counts[j]))
        for new_id, j in enumerate(order)
    ]


def write_candidates(stations: Sequence[CandidateStation], stream: IO[str]) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["id", "lon", "lat", "member_count"])
    for s in stations:
        w.writerow([s.id, repr(s.location.lon), repr(s.location.lat), s.member_count])


def read_candidates(stream: IO[str]) -> list[CandidateStation]:
    return [
        CandidateStation(int(r["id"]), GeoPoint(float(r["lon"]), float(r["lat"])), int(r["member_count"]))
        for r in csv.DictReader(stream)
    ]
