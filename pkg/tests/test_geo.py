import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from deepspace.errors import NonPositiveDuration
from deepspace.geo import GeoConfig, GeoPoint, great_circle_distance, travel_speed


def haversine(a, b, r=6371.0):
    p1, p2 = math.radians(a.latitude), math.radians(b.latitude)
    dp = p2 - p1
    dl = math.radians(b.longitude - a.longitude)
    h = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * r * math.asin(math.sqrt(h))


lon = st.floats(-180, 180, allow_nan=False)
lat = st.floats(-90, 90, allow_nan=False)
points = st.builds(GeoPoint, lon, lat)
jinhua = st.builds(GeoPoint, st.floats(119, 121), st.floats(28, 30))
north = st.builds(GeoPoint, st.floats(-60, 60), st.floats(5, 80))


def test_identity():
    p = GeoPoint(119.90042, 28.88195)
    assert great_circle_distance(p, p) == 0.0


def test_station_jump_is_68_km():
    d = great_circle_distance(GeoPoint(120.07602, 29.49888), GeoPoint(120.04997, 28.88697))
    assert d == pytest.approx(68.0, abs=1.0)


def test_boundary_pair_matches_haversine_value():
    # 1.446231 km computed beforehand with the haversine formula
    d = great_circle_distance(GeoPoint(119.90042, 28.88195), GeoPoint(119.89141, 28.87161))
    assert round(d, 6) == 1.446231


def test_speed():
    assert travel_speed(0.0, 0, 10) == 0.0
    assert travel_speed(68.0, 0, 499) == pytest.approx(68 / (499 / 3600))
    assert travel_speed(68.0, 0, 499) == pytest.approx(490.58, abs=0.01)


@pytest.mark.parametrize("end", [100, 99])
def test_speed_needs_positive_duration(end):
    with pytest.raises(NonPositiveDuration):
        travel_speed(1.0, 100, end)


@pytest.mark.parametrize("lon_, lat_", [(181, 0), (0, -91), (math.nan, 0), (0, math.inf)])
def test_geopoint_validation(lon_, lat_):
    with pytest.raises(ValueError):
        GeoPoint(lon_, lat_)


def test_radius_must_be_positive():
    with pytest.raises(ValueError):
        GeoConfig(0)


@given(points, points)
def test_symmetric_and_nonnegative(a, b):
    d = great_circle_distance(a, b)
    assert d >= 0
    assert d == great_circle_distance(b, a)


@given(points)
def test_self_distance_zero(a):
    assert great_circle_distance(a, a) <= 1e-9


@given(north, north, north)
def test_triangle_inequality(a, b, c):
    assert great_circle_distance(a, c) <= great_circle_distance(a, b) + great_circle_distance(b, c) + 1e-6


def test_agrees_with_haversine_in_jinhua_box():
    import numpy as np

    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        a = GeoPoint(rng.uniform(119, 121), rng.uniform(28, 30))
        b = GeoPoint(rng.uniform(119, 121), rng.uniform(28, 30))
        ref = haversine(a, b)
        worst = max(worst, abs(great_circle_distance(a, b) - ref) / ref)
    assert worst < 0.005


@given(jinhua, jinhua)
def test_haversine_agreement_property(a, b):
    ref = haversine(a, b)
    assert abs(great_circle_distance(a, b) - ref) <= 0.005 * ref + 1e-4
