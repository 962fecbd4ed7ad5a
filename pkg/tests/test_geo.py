import math

import pytest
from hypothesis import given, strategies as st

from chargesite.geo import (DEFAULT_RINGS, FIFTH_RING, BoundingBox, DegreeScale, GeoPoint, RingConfig,
                            RingZone, centroid, in_bbox, manhattan_km, zone_of)

lons = st.floats(116.0, 117.0, allow_nan=False)
lats = st.floats(39.5, 40.5, allow_nan=False)
points = st.builds(GeoPoint, lons, lats)


def test_distance_identity():
    p = GeoPoint(116.40, 39.90)
    assert manhattan_km(p, p) == 0.0


def test_distance_between_table_row_endpoints():
    a, b = GeoPoint(116.4915, 39.6175), GeoPoint(116.4331, 39.8042)
    got = manhattan_km(a, b)
    assert got == pytest.approx(0.1867 * 111.194 + 0.0584 * 85.3, rel=1e-9)
    assert round(got, 1) == 25.7


def test_single_axis_distance_is_exact():
    a, b = GeoPoint(116.40, 39.90), GeoPoint(116.41, 39.90)
    assert manhattan_km(a, b) == abs(116.40 - 116.41) * 85.3


def test_custom_scale():
    a, b = GeoPoint(116.0, 39.0), GeoPoint(117.0, 40.0)
    assert manhattan_km(a, b, DegreeScale(100.0, 50.0)) == 150.0


@given(points, points)
def test_symmetric_and_nonnegative(a, b):
    assert manhattan_km(a, b) == manhattan_km(b, a) >= 0


@given(points, points, points)
def test_triangle_inequality(a, b, c):
    assert manhattan_km(a, c) <= manhattan_km(a, b) + manhattan_km(b, c) + 1e-9


def test_bbox_membership():
    assert in_bbox(GeoPoint(116.40, 39.90), FIFTH_RING)
    assert not in_bbox(GeoPoint(116.4915, 39.6175), FIFTH_RING)
    assert in_bbox(GeoPoint(FIFTH_RING.lon_min, 39.9), FIFTH_RING)


def test_bbox_rejects_inverted_edges():
    with pytest.raises(ValueError):
        BoundingBox(116.5, 116.2, 39.7, 40.0)


def test_clamp():
    box = FIFTH_RING.expanded(0.25)
    p = box.clamp(GeoPoint(118.0, 39.9))
    assert p.lon == 116.8 and p.lat == 39.9
    inside = GeoPoint(116.4, 39.9)
    assert box.clamp(inside) is inside


def test_zones():
    r3 = DEFAULT_RINGS.ring3
    assert zone_of(r3.center) is RingZone.INNER3
    assert zone_of(GeoPoint(116.28, 39.83)) is RingZone.RING3TO4
    assert zone_of(GeoPoint(116.9, 40.3)) is RingZone.OUTER
    assert zone_of(GeoPoint(116.21, 39.76)) is RingZone.OUTER


def test_ring_config_must_nest():
    with pytest.raises(ValueError):
        RingConfig(ring3=FIFTH_RING, ring4=DEFAULT_RINGS.ring3)


def test_centroid():
    assert centroid([GeoPoint(116.3, 39.8)]) == GeoPoint(116.3, 39.8)
    c = centroid([GeoPoint(116.3, 39.8), GeoPoint(116.5, 40.0)])
    assert math.isclose(c.lon, 116.4) and math.isclose(c.lat, 39.9)
    with pytest.raises(ValueError):
        centroid([])


def test_point_validation():
    with pytest.raises(ValueError):
        GeoPoint(float("nan"), 39.9)
    with pytest.raises(ValueError):
        GeoPoint(200.0, 39.9)
