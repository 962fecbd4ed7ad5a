import io
from datetime import datetime, time, timedelta

import pytest
from hypothesis import given, settings, strategies as st

from chargesite.geo import LAT_KM_PER_DEG, RingZone
from chargesite.ingest import group_by_vehicle
from chargesite.tripchain import (ChainParams, TripChain, build_chains, can_link, extract_demand, filter_chains,
                                  in_windows, read_demand, write_demand)

from conftest import T0, chain_violations, trip

P = ChainParams()


def _pair(gap_min=3.0, link_km=0.1, km=(70.0, 70.0)):
    a = trip(start=T0, minutes=60, o=(116.25, 39.90), d=(116.40, 39.90), km=km[0])
    b_start = a.d_time + timedelta(minutes=gap_min)
    b = trip(start=b_start, minutes=60, o=(116.40, 39.90 + link_km / LAT_KM_PER_DEG), d=(116.45, 39.95), km=km[1])
    return a, b


def test_linkable_pair_forms_one_chain():
    a, b = _pair()
    chains = build_chains({"v1": [a, b]})
    assert len(chains) == 1
    assert chains[0].total_km == 140.0
    assert chains[0].trips == (a, b)


def test_range_cap_splits():
    a, b = _pair(km=(80.0, 80.0))
    assert [len(c.trips) for c in build_chains({"v1": [a, b]})] == [1, 1]


def test_long_gap_splits():
    a, b = _pair(gap_min=10)
    assert not can_link(a, b, P)
    assert len(build_chains({"v1": [a, b]})) == 2


def test_far_origin_splits():
    a, b = _pair(link_km=0.6)
    assert len(build_chains({"v1": [a, b]})) == 2


def test_gap_boundaries():
    a, b = _pair(gap_min=5)
    assert can_link(a, b, P)
    a, b = _pair(gap_min=-0.5)
    assert not can_link(a, b, P)


def test_over_range_trip_is_skipped():
    a, b = _pair(km=(150.0, 10.0))
    chains = build_chains({"v1": [a, b]})
    assert [c.trips for c in chains] == [(b,)]


def test_total_just_below_cap():
    a, b = _pair(km=(75.0, 74.999))
    assert len(build_chains({"v1": [a, b]})) == 1
    a, b = _pair(km=(75.0, 75.0))
    assert len(build_chains({"v1": [a, b]})) == 2


def test_demand_points():
    a, b = _pair()
    chains = build_chains({"v1": [a, b]})
    pts = extract_demand(chains)
    assert len(pts) == 2
    assert pts[0].location == a.o and pts[1].location == b.d
    assert [p.end for p in pts] == ["O", "D"]
    assert all(p.weight == 1.0 for p in pts)
    assert extract_demand([]) == []


def test_demand_count_scales():
    c = TripChain("v", (trip(),), 5.0)
    assert len(extract_demand([c] * 3000)) == 6000


def test_demand_round_trip():
    a, b = _pair()
    pts = extract_demand(build_chains({"v1": [a, b]}))
    buf = io.StringIO()
    write_demand(pts, buf)
    assert read_demand(io.StringIO(buf.getvalue())) == pts
    assert pts[0].zone is RingZone.OUTER and pts[1].zone is RingZone.INNER3


def test_windows_half_open():
    rush = ((time(7), time(9)),)
    assert in_windows(datetime(2016, 5, 4, 7, 0), rush)
    assert not in_windows(datetime(2016, 5, 4, 9, 0), rush)
    night = ((time(22), time(2)),)
    assert in_windows(datetime(2016, 5, 4, 23, 0), night)
    assert in_windows(datetime(2016, 5, 4, 1, 59), night)
    assert not in_windows(datetime(2016, 5, 4, 2, 0), night)


def test_filter_chains():
    short = TripChain("a", (trip(start=T0.replace(hour=12)),), 50.0)
    rush = TripChain("b", (trip(start=T0),), 130.0)
    calm = TripChain("c", (trip(start=T0.replace(hour=12)),), 125.0)
    assert filter_chains([short, rush, calm], min_total_km=120) == [rush, calm]
    windows = ((time(7), time(9)),)
    assert filter_chains([short, rush, calm], windows=windows) == [rush]
    assert filter_chains([short, rush, calm], exclude_windows=windows) == [short, calm]
    assert filter_chains([short, rush, calm], max_count=2) == [short, rush]


def _fleet():
    leg = st.tuples(st.floats(0, 8), st.floats(0, 0.7), st.floats(0.5, 90), st.integers(5, 60))

    def build(spec):
        out, t, lat = [], T0, 39.9
        for vid, legs in spec.items():
            t = T0
            for gap, link, km, dur in legs:
                t = t + timedelta(minutes=gap)
                out.append(trip(vid=vid, start=t, minutes=dur, o=(116.4, lat + link / LAT_KM_PER_DEG),
                                d=(116.4, lat), km=km))
                t = out[-1].d_time
        return out

    return st.dictionaries(st.sampled_from(["a", "b", "c"]), st.lists(leg, max_size=12)).map(build)


@settings(max_examples=150, deadline=None)
@given(_fleet())
def test_chain_invariants(records):
    groups = group_by_vehicle(records)
    chains = build_chains(groups)
    assert chain_violations(chains, groups, P) == []
    assert len(extract_demand(chains)) == 2 * len(chains)
