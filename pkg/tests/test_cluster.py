import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chargesite.cluster import KmeansParams, candidate_set, kmeans, read_candidates, write_candidates
from chargesite.geo import GeoPoint, manhattan_km


def _pts(arr):
    return [GeoPoint(float(a), float(b)) for a, b in arr]


def _blobs(seed=3, n=50):
    rng = np.random.default_rng(seed)
    a = rng.normal((116.30, 39.85), 0.005, size=(n, 2))
    b = rng.normal((116.50, 40.00), 0.005, size=(n, 2))
    return _pts(a), _pts(b)


def test_k_equals_n_returns_the_points():
    pts = _pts([(116.3, 39.8), (116.4, 39.9), (116.5, 40.0), (116.35, 39.95)])
    res = kmeans(pts, KmeansParams(k=4, seed=1))
    got = sorted(map(tuple, res.centroids.tolist()))
    assert got == sorted((p.lon, p.lat) for p in pts)
    assert res.counts.tolist() == [1, 1, 1, 1]


def test_k_one_is_the_mean():
    a, b = _blobs()
    pts = a + b
    res = kmeans(pts, KmeansParams(k=1, seed=1))
    mean = np.mean([(p.lon, p.lat) for p in pts], axis=0)
    assert res.centroids[0] == pytest.approx(mean, abs=1e-12)


def test_two_blobs_are_separated():
    a, b = _blobs()
    stations = candidate_set(a + b, KmeansParams(k=2, seed=11))
    assert [s.member_count for s in stations] == [50, 50]
    for blob, s in zip((a, b), stations):
        lons = [p.lon for p in blob]
        lats = [p.lat for p in blob]
        assert min(lons) <= s.location.lon <= max(lons)
        assert min(lats) <= s.location.lat <= max(lats)
    within = max(manhattan_km(p, s.location) for blob, s in zip((a, b), stations) for p in blob)
    assert within < manhattan_km(stations[0].location, stations[1].location)


def test_ids_follow_lat_lon_order():
    a, b = _blobs()
    stations = candidate_set(a + b, KmeansParams(k=3, seed=5))
    assert [s.id for s in stations] == [0, 1, 2]
    keys = [(s.location.lat, s.location.lon) for s in stations]
    assert keys == sorted(keys)


def test_same_seed_same_result():
    a, b = _blobs(seed=8)
    one = candidate_set(a + b, KmeansParams(k=7, seed=42))
    two = candidate_set(a + b, KmeansParams(k=7, seed=42))
    assert one == two
    other = candidate_set(a + b, KmeansParams(k=7, seed=43))
    assert len(other) == 7


def test_seed_is_required():
    with pytest.raises(ValueError, match="seed"):
        kmeans(_blobs()[0], KmeansParams(k=2))


def test_too_few_distinct_points():
    p = GeoPoint(116.4, 39.9)
    with pytest.raises(ValueError, match="distinct"):
        kmeans([p, p, p], KmeansParams(k=2, seed=0))


def test_round_trip():
    stations = candidate_set(sum(_blobs(), []), KmeansParams(k=4, seed=2))
    buf = io.StringIO()
    write_candidates(stations, buf)
    assert read_candidates(io.StringIO(buf.getvalue())) == stations


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 12), st.integers(20, 120))
def test_inertia_never_increases_and_no_empty_clusters(seed, k, n):
    rng = np.random.default_rng(seed)
    x = np.column_stack([rng.uniform(116.2, 116.55, n), rng.uniform(39.75, 40.03, n)])
    res = kmeans(_pts(x), KmeansParams(k=k, seed=seed))
    h = res.inertia_history
    assert all(b <= a * (1 + 1e-12) + 1e-12 for a, b in zip(h, h[1:]))
    assert res.counts.min() >= 1 and res.counts.sum() == n
    assert np.array_equal(np.bincount(res.labels, minlength=k), res.counts)
