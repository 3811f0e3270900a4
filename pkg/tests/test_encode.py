import io
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from deepspace.encode import (COARSE, FINE, Sample, StationIndex, build_station_index, encode_trajectory,
                              make_windows, partition_by_coarse, read_samples_csv, samples_to_arrays,
                              split_train_test, station_key, write_samples_csv)
from deepspace.errors import EmptyInput, UnknownStation
from deepspace.geo import GeoPoint
from deepspace.ingest import Trajectory, UdrRecord


def traj(stops, user="u"):
    """stops: list of (lac, lon, lat)"""
    return Trajectory(user, [UdrRecord(user, 10 * i, 10 * i + 5, lac, GeoPoint(lon, lat))
                             for i, (lac, lon, lat) in enumerate(stops)])


A1, A2 = ("A", 120.0, 29.0), ("A", 120.01, 29.0)
B1, B2 = ("B", 120.5, 29.5), ("B", 120.51, 29.5)


def test_two_by_two_partition():
    idx = build_station_index([traj([A1, A2, B1, B2, A1])])
    assert (idx.n_fine, idx.n_coarse) == (4, 2)
    assert idx.fine_to_coarse == (0, 0, 1, 1)
    assert idx.members(0) == [0, 1] and idx.members(1) == [2, 3]


def test_single_station():
    idx = build_station_index([traj([A1])])
    assert (idx.n_fine, idx.n_coarse) == (1, 1)


def test_majority_lac_wins():
    shared = [("A", 120.2, 29.2)] * 3 + [("B", 120.2, 29.2)]
    idx = build_station_index([traj([("B", 121.0, 29.0)] + shared[::-1])])
    label = idx.fine_label(GeoPoint(120.2, 29.2))
    assert idx.lacids[idx.coarse_of(label)] == "A"


def test_majority_tie_goes_to_first_seen():
    idx = build_station_index([traj([("B", 120.2, 29.2), ("A", 120.2, 29.2), ("A", 121.0, 29.0)])])
    assert idx.lacids[idx.coarse_of(0)] == "B"


def test_empty_input():
    with pytest.raises(EmptyInput):
        build_station_index([])


def test_station_key_precision():
    assert station_key(GeoPoint(119.900421, 28.88195)) == ("119.90042", "28.88195")
    idx = build_station_index([traj([A1])])
    assert idx.fine_label(GeoPoint(120.000001, 29.0)) == 0


def test_index_invariants_checked():
    with pytest.raises(ValueError):
        StationIndex((GeoPoint(120, 29),), ("A", "B"), (0,))


def test_round_trip_and_dict():
    idx = build_station_index([traj([A1, B1, A2, B2])])
    for p in idx.label_to_point:
        assert idx.label_to_point[idx.fine_label(p)] == p
    assert StationIndex.from_dict(idx.to_dict()) == idx


def test_encode_examples():
    idx = build_station_index([traj([A1, A2, A1])])
    t = traj([A1, A2, A1])
    assert encode_trajectory(t, idx, FINE) == [0, 1, 0]
    assert encode_trajectory(t, idx, COARSE) == [0, 0, 0]
    with pytest.raises(UnknownStation):
        encode_trajectory(traj([B1]), idx)
    with pytest.raises(ValueError):
        encode_trajectory(t, idx, "medium")


def test_round_trip_path_projection():
    t = traj([A1, A2, B1, B2, B1, A2, A1])
    idx = build_station_index([t])
    fine = encode_trajectory(t, idx, FINE)
    assert encode_trajectory(t, idx, COARSE) == [idx.fine_to_coarse[f] for f in fine]
    assert encode_trajectory(t, idx, COARSE) == [0, 0, 1, 1, 1, 0, 0]


def test_make_windows_examples():
    assert make_windows([0, 1, 2, 3], 2) == [Sample((0, 1), 2), Sample((1, 2), 3)]
    assert make_windows([0, 1], 2) == []
    assert len(make_windows(list(range(100)), 50)) == 50
    with pytest.raises(ValueError):
        make_windows([0, 1], 0)


@given(st.lists(st.integers(0, 5), max_size=40), st.integers(1, 45))
def test_window_count(labels, W):
    samples = make_windows(labels, W)
    assert len(samples) == max(0, len(labels) - W)
    for t, s in enumerate(samples, start=W):
        assert list(s.window) == labels[t - W:t] and s.target == labels[t]


def test_split_examples():
    assert tuple(map(len, split_train_test(list(range(23))))) == (19, 4)
    assert split_train_test([1, 2, 3], 1.0) == ([1, 2, 3], [])
    assert split_train_test(list(range(7)), 0.5) == ([0, 1, 2], [3, 4, 5, 6])
    with pytest.raises(ValueError):
        split_train_test([1], 1.5)


def test_partition_by_coarse():
    t = traj([A1, A2, B1, B2, A1, B1])
    idx = build_station_index([t])
    samples = make_windows(encode_trajectory(t, idx), 1)
    buckets = partition_by_coarse(samples, idx)
    assert sorted(buckets) == [0, 1]
    assert sum(map(len, buckets.values())) == len(samples)
    only_a = [s for s in samples if idx.coarse_of(s.target) == 0]
    assert list(partition_by_coarse(only_a, idx)) == [0]


def test_partition_matches_counting_oracle():
    rng = np.random.default_rng(3)
    fine_to_coarse = tuple(int(c) for c in [0, 0, 1, 1, 1, 2, 2, 0, 2])
    idx = StationIndex(tuple(GeoPoint(120 + i / 100, 29) for i in range(9)), ("x", "y", "z"), fine_to_coarse)
    samples = [Sample(tuple(rng.integers(0, 9, 3)), int(t)) for t in rng.integers(0, 9, 100)]
    buckets = partition_by_coarse(samples, idx)
    oracle = Counter(fine_to_coarse[s.target] for s in samples)
    assert {k: len(v) for k, v in buckets.items()} == dict(oracle)
    for c, bucket in buckets.items():
        assert all(fine_to_coarse[s.target] == c for s in bucket)


def test_index_is_deterministic():
    ts = [traj([B2, A1, B1, A2]), traj([A2, B1], user="v")]
    assert build_station_index(ts) == build_station_index(ts)


def test_samples_csv_round_trip():
    samples = make_windows([3, 1, 4, 1, 5, 9, 2, 6], 3, COARSE)
    buf = io.StringIO()
    write_samples_csv(samples, buf)
    assert buf.getvalue().splitlines()[0] == "w_0,w_1,w_2,target,scale"
    assert read_samples_csv(io.StringIO(buf.getvalue())) == samples
    x, y = samples_to_arrays(samples)
    assert x.shape == (5, 3) and y.tolist() == [1, 5, 9, 2, 6]
