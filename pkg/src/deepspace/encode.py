"""Two-scale label spaces and supervised windows.

Fine labels index base stations, coarse labels index LACs.  Both are assigned
in order of first appearance so that the same input always gives the same
index.
"""
from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

import numpy as np

from .errors import EmptyInput, UnknownStation
from .geo import GeoPoint
from .ingest import Trajectory

COARSE = "coarse"
FINE = "fine"


def station_key(p: GeoPoint) -> tuple[str, str]:
    """Canonical station identity: coordinates at 5 fractional digits."""
    return (f"{p.longitude:.5f}", f"{p.latitude:.5f}")


@dataclass(frozen=True)
class StationIndex:
    label_to_point: tuple[GeoPoint, ...]
    lacids: tuple[str, ...]
    fine_to_coarse: tuple[int, ...]

    def __post_init__(self):
        n, n_coarse = len(self.label_to_point), len(self.lacids)
        if n < 1 or n_coarse < 1 or n_coarse > n:
            raise ValueError(f"invalid index sizes n={n}, n'={n_coarse}")
        if len(self.fine_to_coarse) != n:
            raise ValueError("fine_to_coarse must cover every fine label")
        if set(self.fine_to_coarse) != set(range(n_coarse)):
            raise ValueError("every coarse label needs at least one fine label")
        object.__setattr__(self, "_fine", {station_key(p): i for i, p in enumerate(self.label_to_point)})
        object.__setattr__(self, "_coarse", {lac: i for i, lac in enumerate(self.lacids)})

    @property
    def n_fine(self) -> int:
        return len(self.label_to_point)

    @property
    def n_coarse(self) -> int:
        return len(self.lacids)

    @property
    def fine_labels(self) -> dict:
        return dict(self._fine)

    @property
    def coarse_labels(self) -> dict:
        return dict(self._coarse)

    def fine_label(self, p: GeoPoint) -> int:
        try:
            return self._fine[station_key(p)]
        except KeyError:
            raise UnknownStation(f"station {station_key(p)} not in index") from None

    def coarse_of(self, fine: int) -> int:
        return self.fine_to_coarse[fine]

    def members(self, coarse: int) -> list[int]:
        """Fine labels belonging to one coarse label, ascending."""
        return [f for f, c in enumerate(self.fine_to_coarse) if c == coarse]

    def to_dict(self) -> dict:
        return {
            "points": [[float(p.longitude), float(p.latitude)] for p in self.label_to_point],
            "lacids": list(self.lacids),
            "fine_to_coarse": list(self.fine_to_coarse),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StationIndex":
        return cls(
            tuple(GeoPoint(float(lon), float(lat)) for lon, lat in d["points"]),
            tuple(d["lacids"]),
            tuple(int(c) for c in d["fine_to_coarse"]),
        )


def build_station_index(trajectories: Iterable[Trajectory]) -> StationIndex:
    """Assign fine and coarse labels by first appearance.

    A station observed under several LACs belongs to the one it was seen with
    most often; ties go to the LAC seen first for that station.
    """
    stations: dict[tuple, GeoPoint] = {}
    lac_counts: dict[tuple, Counter] = {}
    lac_first: dict[tuple, list] = {}
    lac_order: dict[str, int] = {}
    for traj in trajectories:
        for rec in traj.points:
            key = station_key(rec.location)
            if key not in stations:
                stations[key] = rec.location
                lac_counts[key] = Counter()
                lac_first[key] = []
            if rec.lacid not in lac_counts[key]:
                lac_first[key].append(rec.lacid)
            lac_counts[key][rec.lacid] += 1
            lac_order.setdefault(rec.lacid, len(lac_order))
    if not stations:
        raise EmptyInput("no points to index")

    parent = {}
    for key in stations:
        counts = lac_counts[key]
        best = max(counts.values())
        parent[key] = next(lac for lac in lac_first[key] if counts[lac] == best)

    used = sorted({parent[k] for k in stations}, key=lac_order.__getitem__)
    coarse = {lac: i for i, lac in enumerate(used)}
    return StationIndex(
        tuple(stations.values()),
        tuple(used),
        tuple(coarse[parent[k]] for k in stations),
    )


def encode_trajectory(traj: Trajectory, index: StationIndex, scale: str = FINE) -> list[int]:
    fine = [index.fine_label(rec.location) for rec in traj.points]
    if scale == FINE:
        return fine
    if scale == COARSE:
        return [index.fine_to_coarse[f] for f in fine]
    raise ValueError(f"unknown scale {scale!r}")


@dataclass(frozen=True)
class Sample:
    window: tuple[int, ...]
    target: int
    encoding_scale: str = FINE


def make_windows(labels: Sequence[int], W: int, scale: str = FINE) -> list[Sample]:
    """Stride-1 windows of ``W`` past labels, each paired with the next label."""
    if W < 1:
        raise ValueError("window length must be >= 1")
    labels = list(labels)
    return [Sample(tuple(labels[t - W:t]), labels[t], scale) for t in range(W, len(labels))]


def split_train_test(samples: Sequence, train_fraction: float = 19 / 23) -> tuple[list, list]:
    """Chronological split: the first floor(fraction * len) items train."""
    if not 0.0 <= train_fraction <= 1.0:
        raise ValueError("train_fraction must lie in [0, 1]")
    cut = math.floor(train_fraction * len(samples))
    return list(samples[:cut]), list(samples[cut:])


def partition_by_coarse(fine_samples: Iterable[Sample], index: StationIndex) -> dict[int, list[Sample]]:
    """Bucket fine samples by the LAC of their target."""
    buckets: dict[int, list[Sample]] = {}
    for s in fine_samples:
        buckets.setdefault(index.fine_to_coarse[s.target], []).append(s)
    return buckets


def write_samples_csv(samples: Sequence[Sample], stream: IO[str]) -> None:
    W = len(samples[0].window) if samples else 0
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow([f"w_{i}" for i in range(W)] + ["target", "scale"])
    for s in samples:
        writer.writerow(list(s.window) + [s.target, s.encoding_scale])


def read_samples_csv(stream: IO[str]) -> list[Sample]:
    reader = csv.reader(stream)
    header = next(reader)
    W = len(header) - 2
    return [Sample(tuple(int(v) for v in row[:W]), int(row[W]), row[W + 1]) for row in reader]


def samples_to_arrays(samples: Sequence[Sample]) -> tuple[np.ndarray, np.ndarray]:
    windows = np.array([s.window for s in samples], dtype=np.int64)
    targets = np.array([s.target for s in samples], dtype=np.int64)
    return windows, targets
