"""Synthetic data, end-to-end pipeline runs, station-count sweeps and congestion comparisons."""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import timedelta
from typing import IO, Sequence

import numpy as np

from .cluster import CandidateStation, candidate_set
from .config import PipelineConfig, SynthParams
from .cost import CongestionPolicy, CostMatrix, build_cost_matrix
from .errors import EmptyInstanceError, NotComparableError, SitingError, StageError
from .geo import DEFAULT_RINGS, LAT_KM_PER_DEG, LON_KM_PER_DEG, GeoPoint, RingZone, manhattan_km, zone_of
from .ingest import OdRecord, clean, group_by_vehicle
from .solve import Method, Model, SitingSolution, SolveParams, solve
from .tripchain import DemandPoint, TripChain, build_chains, extract_demand, filter_chains

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# synthetic OD records
# ---------------------------------------------------------------------------

class _Mixture:
    def __init__(self, params: SynthParams, rng: np.random.Generator):
        self.rng = rng
        w = np.array([h.weight for h in params.hotspots], dtype=float)
        self.p = w / w.sum()
        self.lon = np.array([h.center.lon for h in params.hotspots])
        self.lat = np.array([h.center.lat for h in params.hotspots])
        spread = np.array([h.spread_km for h in params.hotspots])
        self.sd_lat = spread / LAT_KM_PER_DEG
        self.sd_lon = spread / (LAT_KM_PER_DEG * np.cos(np.radians(self.lat)))

    def draw(self, size: int) -> tuple[np.ndarray, np.ndarray]:
        comp = self.rng.choice(len(self.p), size=size, p=self.p)
        lon = self.lon[comp] + self.rng.standard_normal(size) * self.sd_lon[comp]
        lat = self.lat[comp] + self.rng.standard_normal(size) * self.sd_lat[comp]
        return lon, lat


def generate(params: SynthParams) -> list[OdRecord]:
    """Draw a reproducible set of taxi OD records.

    Each vehicle works a continuous shift of ``records_per_vehicle`` trips.
    The next pickup usually happens a few hundred metres from the last
    drop-off within five minutes, and occasionally after a long idle period
    somewhere else, so trip-chains both grow and break. Destinations are the
    best match to a log-normal target trip length among a handful of hotspot
    draws. Reported distance is the Manhattan O-D distance times a detour
    factor, floored at ``min_trip_km``. All coordinates are clamped to ``bbox``.

    Raises:
        ValueError: no seed was given.
    """
    if params.seed is None:
        raise ValueError("synthetic generation needs an explicit seed")
    rng = np.random.default_rng(params.seed)
    mix = _Mixture(params, rng)
    box = params.bbox
    n_pool = 12
    # pickup drift after a drop-off, never wider than the demand itself
    jitter_km = min(0.12, max(h.spread_km for h in params.hotspots))
    records: list[OdRecord] = []
    for v in range(params.n_vehicles):
        vid = f"V{v:05d}"
        n = params.records_per_vehicle
        if n == 0:
            continue
        targets = np.minimum(rng.lognormal(np.log(params.trip_median_km), params.trip_sigma, n),
                             params.max_trip_km)
        pool_lon, pool_lat = mix.draw(n * n_pool)
        o_lon, o_lat = mix.draw(n)
        linked = rng.random(n) < params.p_link
        short = rng.random(n) < params.p_short_gap
        short_gap = rng.uniform(20, 280, n)
        long_gap = rng.uniform(360, 5400, n)
        jitter = rng.uniform(-1.0, 1.0, (n, 2)) * jitter_km
        speed = rng.uniform(*params.speed_kmh, n)
        detour = rng.uniform(*params.detour, n)

        t = params.start + timedelta(seconds=int(rng.uniform(0, params.start_spread_h * 3600)))
        prev_d: GeoPoint | None = None
        for k in range(n):
            if prev_d is not None and linked[k]:
                origin = box.clamp(GeoPoint(
                    prev_d.lon + jitter[k, 0] / LON_KM_PER_DEG, prev_d.lat + jitter[k, 1] / LAT_KM_PER_DEG))
            else:
                origin = box.clamp(GeoPoint(float(o_lon[k]), float(o_lat[k])))
            if k > 0:
                gap = short_gap[k] if short[k] else long_gap[k]
                t = t + timedelta(seconds=int(gap))
            want = targets[k] / detour[k]
            best, best_err = origin, math.inf
            for c in range(k * n_pool, (k + 1) * n_pool):
                cand = box.clamp(GeoPoint(float(pool_lon[c]), float(pool_lat[c])))
                err = abs(manhattan_km(origin, cand) - want)
                if err < best_err:
                    best, best_err = cand, err
            dist = max(manhattan_km(origin, best) * detour[k], params.min_trip_km)
            duration = max(60, int(dist / speed[k] * 3600))
            d_time = t + timedelta(seconds=duration)
            records.append(OdRecord(vid, t, origin, d_time, best, round(float(dist), 3)))
            t, prev_d = d_time, best
    return records


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

@dataclass
class Bundle:
    """Everything a solver needs, plus where it came from."""

    demand: list[DemandPoint]
    candidates: list[CandidateStation]
    matrix: CostMatrix
    chains: list[TripChain] = field(default_factory=list)
    policy: CongestionPolicy | None = None
    provenance: dict[str, int] = field(default_factory=dict)


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except SitingError as exc:
        if isinstance(exc, StageError):
            raise
        raise StageError(name, exc) from exc
    except ValueError as exc:
        raise StageError(name, exc) from exc


def select_chains(chains: Sequence[TripChain], cfg: PipelineConfig) -> list[TripChain]:
    f = cfg.chain_filter
    windows = cfg.congestion.windows
    return filter_chains(
        chains,
        min_total_km=f.min_total_km,
        windows=windows if f.period == "rush" else None,
        exclude_windows=windows if f.period == "offpeak" else None,
        max_count=f.max_count,
    )


def run_pipeline(records: Sequence[OdRecord], cfg: PipelineConfig,
                 policy: CongestionPolicy | None = None) -> Bundle:
    """Clean, chain, extract demand, cluster candidates and build the cost matrix.

    ``policy`` weights the matrix; when omitted, the config's congestion
    policy is used if ``congestion_enabled`` is set. Failures are re-raised as
    :class:`StageError` naming the stage.
    """
    if policy is None and cfg.congestion_enabled:
        policy = cfg.congestion
    prov: dict[str, int] = {"records_in": len(records)}
    cleaned, report = _stage("clean", clean, list(records), cfg.cleaning)
    prov.update({f"clean_{k}": v for k, v in vars(report).items()})
    groups = _stage("group", group_by_vehicle, cleaned)
    prov["vehicles"] = len(groups)
    chains = _stage("chains", build_chains, groups, cfg.chain, cfg.scale)
    prov["chains_built"] = len(chains)
    prov["trips_chained"] = sum(len(c.trips) for c in chains)
    prov["trips_over_range"] = len(cleaned) - prov["trips_chained"]
    kept = _stage("filter", select_chains, chains, cfg)
    prov["chains_kept"] = len(kept)
    demand = _stage("demand", extract_demand, kept, cfg.rings)
    prov["demand_points"] = len(demand)
    if not demand:
        raise StageError("matrix", EmptyInstanceError())
    candidates = _stage("cluster", candidate_set, demand, cfg.kmeans, cfg.scale)
    prov["candidates"] = len(candidates)
    matrix = _stage("matrix", build_cost_matrix, demand, candidates, policy, cfg.scale)
    return Bundle(demand, candidates, matrix, kept, policy, prov)


def with_policy(bundle: Bundle, policy: CongestionPolicy | None, cfg: PipelineConfig) -> Bundle:
    """Same demand and candidates, matrix rebuilt under another congestion policy."""
    matrix = build_cost_matrix(bundle.demand, bundle.candidates, policy, cfg.scale)
    return replace(bundle, matrix=matrix, policy=policy)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

@dataclass
class SweepRow:
    m: int
    pmedian_avg_km: float
    minmax_km: float
    exact_pmedian: bool
    exact_minmax: bool
    error: str = ""


@dataclass
class SweepResult:
    rows: list[SweepRow]
    scenario: str = ""
    seed: int | None = None
    warnings: list[str] = field(default_factory=list)


def _solve_m(matrix: CostMatrix, params: SolveParams) -> SweepRow:
    pm = mm = None
    errors = []
    try:
        pm = solve(matrix, Model.PMEDIAN, params)
    except SitingError as exc:
        errors.append(f"pmedian: {exc}")
    try:
        mm = solve(matrix, Model.MINMAX, params)
    except SitingError as exc:
        errors.append(f"minmax: {exc}")
    return SweepRow(
        m=params.m,
        pmedian_avg_km=pm.pmedian_avg_km if pm else math.nan,
        minmax_km=mm.minmax_objective if mm else math.nan,
        exact_pmedian=bool(pm and pm.exact),
        exact_minmax=bool(mm and mm.exact),
        error="; ".join(errors),
    )


def sweep_m(bundle: Bundle, m_from: int, m_to: int, method: Method, base: SolveParams,
            jobs: int = 1, scenario: str = "") -> SweepResult:
    """Solve both models for every m in ``[m_from, m_to]``.

    Per-m failures are recorded in the row and the sweep carries on. For
    heuristic rows, a rise of more than 5% over the previous m is flagged as
    a solver-quality warning.
    """
    n_cand = bundle.matrix.n_candidates
    if not 1 <= m_from <= m_to <= n_cand:
        raise ValueError(f"sweep range must satisfy 1 <= from <= to <= |J| (|J| = {n_cand})")
    params = [replace(base, m=m, method=method) for m in range(m_from, m_to + 1)]
    if jobs > 1 and len(params) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_solve_m, [bundle.matrix] * len(params), params))
    else:
        rows = [_solve_m(bundle.matrix, p) for p in params]

    warnings = []
    for prev, cur in zip(rows, rows[1:]):
        for name, a, b, exact in (("pmedian_avg_km", prev.pmedian_avg_km, cur.pmedian_avg_km,
                                   prev.exact_pmedian and cur.exact_pmedian),
                                  ("minmax_km", prev.minmax_km, cur.minmax_km,
                                   prev.exact_minmax and cur.exact_minmax)):
            if not exact and b > a * 1.05:
                msg = f"{name} rose from {a:.4f} at m={prev.m} to {b:.4f} at m={cur.m}"
                logger.warning("solver quality: %s", msg)
                warnings.append(msg)
    return SweepResult(rows, scenario, base.seed, warnings)


def write_sweep(result: SweepResult, stream: IO[str]) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["m", "pmedian_avg_km", "minmax_km", "exact_pmedian", "exact_minmax"])
    for r in result.rows:
        w.writerow([r.m, repr(r.pmedian_avg_km), repr(r.minmax_km),
                    str(r.exact_pmedian).lower(), str(r.exact_minmax).lower()])


def read_sweep(stream: IO[str]) -> SweepResult:
    """Raises ValueError on a malformed or empty sweep file."""
    reader = csv.DictReader(stream)
    need = {"m", "pmedian_avg_km", "minmax_km", "exact_pmedian", "exact_minmax"}
    if reader.fieldnames is None or not need <= set(reader.fieldnames):
        raise ValueError("sweep file lacks the expected columns")
    try:
        rows = [SweepRow(int(r["m"]), float(r["pmedian_avg_km"]), float(r["minmax_km"]),
                         r["exact_pmedian"] == "true", r["exact_minmax"] == "true")
                for r in reader]
    except (TypeError, ValueError) as exc:
        raise ValueError(f"malformed sweep row: {exc}") from exc
    if not rows:
        raise ValueError("sweep file has no rows")
    if any(a.m >= b.m for a, b in zip(rows, rows[1:])):
        raise ValueError("sweep m values must be strictly increasing")
    return SweepResult(rows)


# ---------------------------------------------------------------------------
# congestion comparison
# ---------------------------------------------------------------------------

@dataclass
class CompareReport:
    m: int
    plain: dict[Model, SitingSolution]
    congested: dict[Model, SitingSolution]
    zones: dict[int, RingZone]
    candidates: list[CandidateStation]

    def zone_counts(self, sol: SitingSolution) -> dict[RingZone, int]:
        counts = {z: 0 for z in RingZone}
        for j in sol.open:
            counts[self.zones[j]] += 1
        return counts

    def downtown_delta(self, model: Model = Model.PMEDIAN) -> int:
        return (self.zone_counts(self.congested[model])[RingZone.INNER3]
                - self.zone_counts(self.plain[model])[RingZone.INNER3])

    def to_text(self) -> str:
        lines = [f"m = {self.m}"]
        for model in Model:
            for case, sols in (("plain", self.plain), ("congested", self.congested)):
                sol = sols[model]
                key = f"{model.value}.{case}"
                lines.append(f"{key}.exact = {str(sol.exact).lower()}")
                lines.append(f"{key}.pmedian_avg_km = {sol.pmedian_avg_km!r}")
                lines.append(f"{key}.minmax_km = {sol.minmax_objective!r}")
                for z, c in self.zone_counts(sol).items():
                    lines.append(f"{key}.open_{z.value} = {c}")
                lines.append(f"{key}.open = {' '.join(map(str, sol.open))}")
            lines.append(f"{model.value}.downtown_delta = {self.downtown_delta(model)}")
        return "\n".join(lines) + "\n"

    def write_stations(self, stream: IO[str]) -> None:
        plain = set(self.plain[Model.PMEDIAN].open)
        cong = set(self.congested[Model.PMEDIAN].open)
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(["id", "lon", "lat", "zone", "open_plain", "open_congested"])
        for c in self.candidates:
            w.writerow([c.id, repr(c.location.lon), repr(c.location.lat), self.zones[c.id].value,
                        int(c.id in plain), int(c.id in cong)])


def congestion_compare(plain: Bundle, congested: Bundle, params: SolveParams, rings=None) -> CompareReport:
    """Solve both models on both bundles and count open stations per ring zone.

    Raises:
        NotComparableError: the bundles do not share demand and candidate sets.
    """
    if ([(p.id, p.location) for p in plain.demand] != [(p.id, p.location) for p in congested.demand]
            or plain.candidates != congested.candidates
            or plain.matrix.d.shape != congested.matrix.d.shape):
        raise NotComparableError()
    rings = rings or (congested.policy.rings if congested.policy else DEFAULT_RINGS)
    zones = {c.id: zone_of(c.location, rings) for c in plain.candidates}
    res_plain = {model: solve(plain.matrix, model, params) for model in Model}
    res_cong = {model: solve(congested.matrix, model, params) for model in Model}
    return CompareReport(params.m, res_plain, res_cong, zones, list(plain.candidates))
