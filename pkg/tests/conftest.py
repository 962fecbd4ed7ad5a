import itertools
import sys
import math
from datetime import datetime, timedelta

import numpy as np
import pytest

from chargesite.cost import CostMatrix
from chargesite.geo import GeoPoint
from chargesite.ingest import OdRecord

T0 = datetime(2016, 5, 4, 8, 0, 0)


def random_instance(rng: np.random.Generator, n_max: int = 30, j_max: int = 12, m_max: int = 4,
                    ties: bool = False):
    """Random facility instance as (matrix, m); ``ties`` rounds distances to whole km."""
    n = int(rng.integers(1, n_max + 1))
    j = int(rng.integers(2, j_max + 1))
    m = int(rng.integers(1, min(m_max, j) + 1))
    pts = rng.uniform(0, 20, size=(n, 2))
    sites = rng.uniform(0, 20, size=(j, 2))
    d = np.abs(pts[:, None, :] - sites[None, :, :]).sum(axis=2)
    if ties:
        d = np.round(d)
    h = rng.integers(1, 4, size=n).astype(float) if rng.random() < 0.5 else np.ones(n)
    return CostMatrix(d, h), m


def instances(count: int = 100, seed: int = 2024):
    rng = np.random.default_rng(seed)
    return [random_instance(rng, ties=bool(k % 4 == 3)) for k in range(count)]


def brute_pmedian(matrix: CostMatrix, m: int):
    """Exhaustive P-median: (objective, lexicographically first optimal column set)."""
    best, arg = math.inf, None
    h = matrix.weights.tolist()
    for cols in itertools.combinations(range(matrix.n_candidates), m):
        sub = matrix.d[:, cols].min(axis=1).tolist()
        val = math.fsum(hi * di for hi, di in zip(h, sub))
        if val < best:
            best, arg = val, cols
    return best, arg


def brute_minmax(matrix: CostMatrix, m: int):
    best, arg = math.inf, None
    for cols in itertools.combinations(range(matrix.n_candidates), m):
        val = float(matrix.d[:, cols].min(axis=1).max())
        if val < best:
            best, arg = val, cols
    return best, arg


def brute_assign(d: np.ndarray, open_cols):
    """Per-row nearest open column, ties to the lowest column index, by plain loops."""
    out = []
    for i in range(d.shape[0]):
        best_c, best_v = None, math.inf
        for c in sorted(open_cols):
            if d[i, c] < best_v:
                best_c, best_v = c, d[i, c]
        out.append(best_c)
    return out


def check_feasible(sol, matrix: CostMatrix, m: int) -> list[str]:
    """Return the list of violated solution invariants (empty when feasible)."""
    problems = []
    ids = matrix.candidate_ids
    col_of = {cid: c for c, cid in enumerate(ids)}
    if len(sol.open) != m or len(set(sol.open)) != m:
        problems.append("open set does not have m distinct stations")
    if list(sol.open) != sorted(sol.open) or not set(sol.open) <= set(ids):
        problems.append("open ids unsorted or unknown")
    if len(sol.assignment) != matrix.n_demand:
        problems.append("assignment length")
        return problems
    if not set(sol.assignment) <= set(sol.open):
        problems.append("demand assigned to a closed station")
    cols = [col_of[j] for j in sol.open]
    dist = [matrix.d[i, col_of[j]] for i, j in enumerate(sol.assignment)]
    if any(dist[i] != matrix.d[i, cols].min() for i in range(matrix.n_demand)):
        problems.append("assignment is not nearest-open")
    if sol.pmedian_objective != math.fsum((matrix.weights * np.array(dist)).tolist()):
        problems.append("pmedian objective inconsistent")
    if sol.minmax_objective != max(dist):
        problems.append("minmax objective inconsistent")
    return problems


def trip(vid="v1", start=T0, minutes=20, o=(116.40, 39.90), d=(116.41, 39.91), km=5.0):
    return OdRecord(vid, start, GeoPoint(*o) if o else None, start + timedelta(minutes=minutes),
                    GeoPoint(*d) if d else None, km)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def chain_violations(chains, per_vehicle, params, scale=None):
    """Every broken trip-chain invariant, as readable strings."""
    from chargesite.geo import DEFAULT_SCALE, manhattan_km
    scale = scale or DEFAULT_SCALE
    bad = []
    for n, c in enumerate(chains):
        if not c.total_km < params.range_cap_km:
            bad.append(f"chain {n}: total {c.total_km} km")
        if abs(c.total_km - sum(t.distance_km for t in c.trips)) > 1e-9:
            bad.append(f"chain {n}: total does not match its trips")
        for a, b in zip(c.trips, c.trips[1:]):
            gap = (b.o_time - a.d_time).total_seconds()
            if not 0 <= gap <= params.max_gap_min * 60:
                bad.append(f"chain {n}: gap {gap} s")
            if manhattan_km(a.d, b.o, scale) > params.max_link_km:
                bad.append(f"chain {n}: link {manhattan_km(a.d, b.o, scale)} km")
    # partition: each vehicle's usable trips appear once, in order, across its chains
    by_vehicle = {}
    for c in chains:
        if any(t.vehicle_id != c.vehicle_id for t in c.trips):
            bad.append(f"chain of {c.vehicle_id} mixes vehicles")
        by_vehicle.setdefault(c.vehicle_id, []).extend(c.trips)
    for vid, trips in per_vehicle.items():
        usable = [t for t in trips if t.distance_km < params.range_cap_km]
        if by_vehicle.get(vid, []) != usable:
            bad.append(f"vehicle {vid}: chains do not partition its trips")
    if set(by_vehicle) - set(per_vehicle):
        bad.append("chains reference unknown vehicles")
    return bad


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "VERDICTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.pytest_terminal_summary_lines():
        terminalreporter.write_line(line)
