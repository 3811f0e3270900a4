import io

import pytest
from hypothesis import given
from hypothesis import strategies as st

from deepspace.errors import MissingHeader
from deepspace.geo import GeoPoint, great_circle_distance, travel_speed
from deepspace.ingest import (CleanConfig, Trajectory, UdrRecord, clean_pipeline, drop_dirty, fix_switching,
                              flatten, group_and_sort, parse_time, parse_udr_csv, udr_csv_text)

from conftest import HEADER, BOUNDARY_PAIR, JUMP_PAIR, csv_bytes


def rec(user="u", s=0, e=10, lac="1", lon=120.0, lat=29.0):
    return UdrRecord(user, s, e, lac, GeoPoint(lon, lat))


# -- parsing -----------------------------------------------------------------

def test_parse_rows(boundary_pair):
    records, rejected = parse_udr_csv(boundary_pair)
    assert len(records) == 2 and rejected == []
    assert records[0].location == GeoPoint(119.90042, 28.88195)
    assert records[1].stime == parse_time("2014-11-26 10:54:32")


def test_empty_stime_is_rejected():
    records, rejected = parse_udr_csv(csv_bytes("u1,,2014-11-26 10:54:32,,,,5701,119.9,28.8\n"))
    assert records == []
    assert [r.reason for r in rejected] == ["EmptyRequiredField"]
    assert rejected[0].line_number == 2


def test_header_only():
    assert parse_udr_csv(io.BytesIO(HEADER.encode())) == ([], [])


def test_missing_header_field():
    with pytest.raises(MissingHeader):
        parse_udr_csv(io.BytesIO(b"phonenum,stime,etime,lacid,longitude\n"))


def test_text_streams_work_too():
    records, _ = parse_udr_csv(io.StringIO(HEADER + JUMP_PAIR))
    assert len(records) == 2


def test_malformed_rows_are_accounted_for():
    body = BOUNDARY_PAIR + "x,bad-time,2014-11-26 10:54:32,,,,1,120,29\n" + "y,too,few\n" + \
        "z,2014-11-26 10:54:31,2014-11-26 10:54:32,,,,1,999,29\n"
    records, rejected = parse_udr_csv(csv_bytes(body))
    assert len(records) + len(rejected) == 5
    assert {r.reason for r in rejected} == {"BadTimestamp", "WrongFieldCount", "BadCoordinate"}


def test_csv_round_trip(jump_pair):
    records, _ = parse_udr_csv(jump_pair)
    again, _ = parse_udr_csv(io.StringIO(udr_csv_text(records)))
    assert again == records


# -- dirty records -----------------------------------------------------------

def test_drop_dirty():
    a, b = rec(s=0, e=5), rec(s=10, e=20)
    assert drop_dirty([a, a, b]) == [a, b]
    assert drop_dirty([rec(s=10, e=5)]) == []
    assert drop_dirty([rec(lac="")]) == []
    assert drop_dirty([a, b]) == [a, b]


# -- grouping ----------------------------------------------------------------

def test_group_and_sort_interleaved():
    recs = [rec("a", 30, 31), rec("b", 5, 6), rec("a", 10, 11), rec("b", 1, 2)]
    trajs = group_and_sort(recs)
    assert [t.user for t in trajs] == ["a", "b"]
    assert [p.stime for p in trajs[0].points] == [10, 30]
    assert [p.stime for p in trajs[1].points] == [1, 5]


def test_group_tie_breaks():
    x, y, z = rec(s=5, e=9, lon=120.1), rec(s=5, e=7, lon=120.2), rec(s=5, e=9, lon=120.3)
    (t,) = group_and_sort([x, y, z])
    assert t.points == [y, x, z]


def test_group_single_and_sorted_pair(jump_pair):
    assert len(group_and_sort([rec()])[0]) == 1
    records, _ = parse_udr_csv(jump_pair)
    (t,) = group_and_sort(records)
    assert t.points == records


# -- switching fixes ---------------------------------------------------------

def test_rule_a_shared_boundary(boundary_pair):
    records, _ = parse_udr_csv(boundary_pair)
    (t,) = group_and_sort(records)
    fixed = fix_switching(t)
    assert fixed.points[1].location == GeoPoint(119.90042, 28.88195)
    assert fixed.points[1].lacid == fixed.points[0].lacid


def test_rule_b_overspeed(jump_pair):
    records, _ = parse_udr_csv(jump_pair)
    (t,) = group_and_sort(records)
    a, b = t.points
    speed = travel_speed(great_circle_distance(a.location, b.location), a.etime, b.stime)
    assert speed > CleanConfig().v_max_kmh
    fixed = fix_switching(t)
    assert fixed.points[1].location == GeoPoint(120.07602, 29.49888)
    assert fixed.points[1].lacid == "5702"


def test_plausible_trajectory_unchanged():
    pts = [rec(s=0, e=10, lon=120.0), rec(s=3600, e=3610, lon=120.1), rec(s=7200, e=7300, lon=120.2)]
    t = Trajectory("u", pts)
    assert fix_switching(t).points == pts


def test_fix_propagates():
    # the second point is a jump; the third is only plausible from the corrected second
    pts = [rec(s=0, e=10, lon=120.0), rec(s=20, e=30, lon=121.0), rec(s=40, e=50, lon=121.0)]
    out = fix_switching(Trajectory("u", pts)).points
    assert out[1].location == out[2].location == pts[0].location


def test_high_threshold_keeps_jump(jump_pair):
    records, _ = parse_udr_csv(jump_pair)
    (t,) = clean_pipeline(records, CleanConfig(v_max_kmh=600))
    assert t.points[1].location == records[1].location


# -- properties --------------------------------------------------------------

users = st.sampled_from(["u1", "u2", "u3"])
record_st = st.builds(
    rec,
    user=users,
    s=st.integers(0, 3000),
    e=st.integers(0, 3300),
    lac=st.sampled_from(["1", "2"]),
    lon=st.sampled_from([120.0, 120.01, 120.3, 121.0]),
    lat=st.sampled_from([29.0, 29.02]),
)


@given(st.lists(record_st, max_size=25))
def test_pipeline_idempotent(records):
    once = flatten(clean_pipeline(records))
    assert flatten(clean_pipeline(once)) == once


@given(st.lists(record_st, max_size=25))
def test_no_violations_after_cleaning(records):
    cfg = CleanConfig()
    for t in clean_pipeline(records, cfg):
        for a, b in zip(t.points, t.points[1:]):
            if a.etime == b.stime:
                assert a.location == b.location
            elif b.stime > a.etime:
                d = great_circle_distance(a.location, b.location)
                assert travel_speed(d, a.etime, b.stime) <= cfg.v_max_kmh


@given(st.lists(record_st, max_size=25))
def test_fix_conserves_point_count(records):
    for t in group_and_sort(drop_dirty(records)):
        fixed = fix_switching(t)
        assert len(fixed) == len(t)
        assert [(p.stime, p.etime) for p in fixed.points] == [(p.stime, p.etime) for p in t.points]
