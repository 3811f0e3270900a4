"""Synthetic stand-in for a private UDR dataset.

A world is a set of LACs, each a cluster of base stations.  A persona follows
a fixed daily routine over those stations, departing from it through a
two-level Markov chain (LAC chain, then a station inside the chosen LAC) at a
rate set by ``regularity``.  Record times are spaced so that the genuine
trajectory never exceeds ``TRAVEL_KMH``; switching anomalies can be injected
afterwards to exercise cleaning.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .encode import station_key
from .errors import BoxTooSmall
from .geo import GeoConfig, GeoPoint, great_circle_distance, offset_point
from .ingest import CleanConfig, UdrRecord

DEFAULT_BBOX = (119.0, 121.0, 28.0, 30.0)  # lon_min, lon_max, lat_min, lat_max
TRAVEL_KMH = 60.0
DAY = 86400
BASE_TIME = 1416528000  # 2014-11-21 00:00:00, wall clock
PLACEHOLDER = {"host": "host.invalid", "appid": "app0", "url": "http://host.invalid/"}


@dataclass(frozen=True)
class SynthWorld:
    lac_centers: tuple[GeoPoint, ...]
    stations: tuple[tuple[GeoPoint, ...], ...]
    lac_ids: tuple[str, ...]
    scatter_km: float

    @property
    def n_lacs(self) -> int:
        return len(self.lac_centers)

    @property
    def n_stations(self) -> int:
        return sum(len(s) for s in self.stations)

    def flat_stations(self) -> list[tuple[int, GeoPoint]]:
        """(lac, point) for every station, in global id order."""
        return [(a, p) for a, pts in enumerate(self.stations) for p in pts]

    def station_lac(self) -> np.ndarray:
        return np.array([a for a, _ in self.flat_stations()], dtype=np.int64)


def _round5(p: GeoPoint) -> GeoPoint:
    return GeoPoint(round(p.longitude, 5), round(p.latitude, 5))


def generate_world(n_lacs: int, stations_per_lac: int, bbox=DEFAULT_BBOX, seed: int = 0,
                   scatter_km: float = 5.0, geo: GeoConfig = GeoConfig()) -> SynthWorld:
    """LAC centres uniform in ``bbox``; stations uniform in a disc around each centre."""
    if n_lacs < 1 or stations_per_lac < 1:
        raise ValueError("counts must be positive")
    lon0, lon1, lat0, lat1 = bbox
    rng = np.random.default_rng(seed)
    seen = set()
    centers, stations = [], []
    for _ in range(n_lacs):
        center = _round5(GeoPoint(float(rng.uniform(lon0, lon1)), float(rng.uniform(lat0, lat1))))
        pts = []
        for _ in range(stations_per_lac):
            for _attempt in range(1000):
                r = scatter_km * 0.98 * math.sqrt(rng.uniform())
                theta = rng.uniform(0, 2 * math.pi)
                p = _round5(offset_point(center, r * math.cos(theta), r * math.sin(theta), geo))
                if station_key(p) not in seen and great_circle_distance(center, p, geo) <= scatter_km:
                    break
            else:
                raise BoxTooSmall("could not place distinct stations; widen bbox or scatter radius")
            seen.add(station_key(p))
            pts.append(p)
        centers.append(center)
        stations.append(tuple(pts))
    lac_ids = tuple(str(5700 + 13 * a) for a in range(n_lacs))
    return SynthWorld(tuple(centers), tuple(stations), lac_ids, scatter_km)


@dataclass(frozen=True)
class Persona:
    home: int
    work: int
    routine: tuple[int, ...]
    lac_transition: np.ndarray          # [periods, lacs, lacs]
    station_transition: tuple           # per LAC, [s, s]
    station_entry: tuple                # per LAC, [s]
    mobility_rate: int
    regularity: float

    def __post_init__(self):
        if not 0.0 <= self.regularity <= 1.0:
            raise ValueError("regularity must lie in [0, 1]")
        mats = [self.lac_transition.reshape(-1, self.lac_transition.shape[-1])]
        mats += [np.atleast_2d(m) for m in self.station_transition + self.station_entry]
        for m in mats:
            if np.any(m < 0) or not np.allclose(m.sum(axis=1), 1.0, atol=1e-9, rtol=0):
                raise ValueError("transition rows must be probability vectors")


def _period(k: int, records_per_day: int) -> int:
    """0 for the night quarters of the day, 1 for daytime."""
    q = records_per_day / 4
    return 0 if (k < q or k >= 3 * q) else 1


def make_persona(world: SynthWorld, regularity: float = 0.9, records_per_day: int = 40,
                 seed: int = 0, stay_night: float = 0.9, stay_day: float = 0.6,
                 station_moves: float = 0.1, station_transition=None, station_entry=None, lac_transition=None) -> Persona:
    """A persona whose routine starts and ends at home and visits every LAC once."""
    rng = np.random.default_rng(seed)
    L = world.n_lacs
    sizes = [len(s) for s in world.stations]
    offsets = np.cumsum([0] + sizes)
    home_lac = int(rng.integers(L))
    others = [a for a in rng.permutation(L).tolist() if a != home_lac]
    order = [home_lac] + others + [home_lac]
    bounds = np.linspace(0, records_per_day, len(order) + 1).round().astype(int)
    routine = []
    for a, lo, hi in zip(order, bounds[:-1], bounds[1:]):
        s = int(rng.integers(sizes[a]))
        for _ in range(hi - lo):
            routine.append(int(offsets[a] + s))
            if rng.uniform() < station_moves:
                s = int(rng.integers(sizes[a]))
    if lac_transition is None:
        lac_transition = np.empty((2, L, L))
        for p, stay in enumerate((stay_night, stay_day)):
            if L == 1:
                lac_transition[p] = 1.0
            else:
                lac_transition[p] = (1 - stay) / (L - 1)
                np.fill_diagonal(lac_transition[p], stay)
    if station_transition is None:
        station_transition = tuple(np.full((n, n), 1.0 / n) for n in sizes)
    if station_entry is None:
        station_entry = tuple(np.full(n, 1.0 / n) for n in sizes)
    work = routine[int(bounds[1])] if len(order) > 2 and bounds[1] < records_per_day else routine[0]
    return Persona(routine[0], work, tuple(routine), np.asarray(lac_transition, dtype=float),
                   tuple(np.asarray(m, dtype=float) for m in station_transition),
                   tuple(np.asarray(m, dtype=float) for m in station_entry),
                   records_per_day, float(regularity))


def _station_base(world: SynthWorld, persona: Persona) -> np.ndarray:
    """Row p, block b: where inside LAC b a non-routine step from station p lands."""
    lac = world.station_lac()
    sizes = [len(s) for s in world.stations]
    offsets = np.cumsum([0] + sizes)
    n = len(lac)
    base = np.zeros((n, n))
    for p in range(n):
        a = lac[p]
        for b in range(world.n_lacs):
            row = persona.station_transition[a][p - offsets[a]] if b == a else persona.station_entry[b]
            base[p, offsets[b]:offsets[b + 1]] = row
    return base


def noise_matrix(world: SynthWorld, persona: Persona, period: int) -> np.ndarray:
    """Fine-label transition matrix of a fully non-routine step in the given period."""
    lac = world.station_lac()
    return persona.lac_transition[period][lac][:, lac] * _station_base(world, persona)


def step_matrices(world: SynthWorld, persona: Persona) -> list[np.ndarray]:
    """Fine-label transition matrix for each step of the day.

    Regularity acts on both levels independently: the LAC follows the routine
    with probability ``r`` (else a LAC-chain move), and inside the routine's
    LAC the station follows the routine with probability ``r`` (else a
    station-chain move).  Fine positions are therefore noisier than LACs.
    """
    lac = world.station_lac()
    r = persona.regularity
    base = _station_base(world, persona)
    mats = []
    for k, target in enumerate(persona.routine):
        routine_lac = lac[target]
        lac_prob = (1 - r) * persona.lac_transition[_period(k, persona.mobility_rate)][lac]
        lac_prob[:, routine_lac] += r
        inner = base.copy()
        block = lac == routine_lac
        inner[:, block] *= 1 - r
        inner[:, target] += r
        mats.append(lac_prob[:, lac] * inner)
    return mats


def simulate_labels(world: SynthWorld, persona: Persona, days: int, records_per_day: int | None = None,
                    seed: int = 0) -> list[int]:
    """Global fine-label sequence of ``days * records_per_day`` steps."""
    if days < 1:
        raise ValueError("days must be >= 1")
    rpd = records_per_day or persona.mobility_rate
    if len(persona.routine) != rpd:
        raise ValueError(f"persona routine has {len(persona.routine)} steps, not {rpd}")
    rng = np.random.default_rng(seed)
    cdfs = [np.cumsum(m, axis=1) for m in step_matrices(world, persona)]
    prev = persona.home
    labels = []
    for _ in range(days):
        for k in range(rpd):
            row = cdfs[k][prev]
            cur = int(min(np.searchsorted(row, rng.uniform() * row[-1], side="right"), len(row) - 1))
            labels.append(cur)
            prev = cur
    return labels


def generate_trajectory(world: SynthWorld, persona: Persona, days: int,
                        records_per_day: int | None = None, seed: int = 0,
                        user: str = "70000000000", geo: GeoConfig = GeoConfig()) -> list[UdrRecord]:
    """Time-ordered UDR records for one user."""
    rpd = records_per_day or persona.mobility_rate
    labels = simulate_labels(world, persona, days, rpd, seed)
    return records_from_labels(world, labels, rpd, seed, user, geo)


def records_from_labels(world: SynthWorld, labels: Sequence[int], records_per_day: int, seed: int = 0,
                        user: str = "70000000000", geo: GeoConfig = GeoConfig()) -> list[UdrRecord]:
    """Timestamp a global station-label sequence, ``records_per_day`` per day.

    Arrivals are sorted uniform draws within each day, sessions last 1 to 300
    seconds, and every start is pushed back far enough for the hop from the
    previous station to be feasible at ``TRAVEL_KMH``.
    """
    rpd = records_per_day
    rng = np.random.default_rng([seed, 1])
    stations = world.flat_stations()
    records = []
    prev_end, prev_pt = None, None
    days = -(-len(labels) // rpd)
    for d in range(days):
        arrivals = np.sort(rng.uniform(0, DAY, size=rpd))
        sessions = rng.integers(1, 301, size=rpd)
        for k in range(min(rpd, len(labels) - d * rpd)):
            a, pt = stations[labels[d * rpd + k]]
            start = BASE_TIME + d * DAY + int(arrivals[k])
            if prev_end is not None:
                need = great_circle_distance(prev_pt, pt, geo) / TRAVEL_KMH * 3600
                start = max(start, prev_end + 1 + math.ceil(need))
            end = start + int(sessions[k])
            records.append(UdrRecord(user, start, end, world.lac_ids[a], pt, **PLACEHOLDER))
            prev_end, prev_pt = end, pt
    return records


@dataclass(frozen=True)
class AnomalyTruth:
    record_index: int
    kind: str
    phonenum: str
    stime: int
    etime: int
    true_location: GeoPoint
    true_lacid: str


def inject_anomalies(records: Sequence[UdrRecord], rate: float, seed: int = 0,
                     cfg: CleanConfig = CleanConfig()) -> tuple[list[UdrRecord], list[AnomalyTruth]]:
    """Plant base-station switching jumps between consecutive records.

    For a chosen pair (i, j) the user is taken to have stayed at record i's
    station; record j is then observed either at a nearby station starting
    exactly when i ended (kind ``"a"``) or at a distant station implying an
    impossible speed (kind ``"b"``).  Chosen pairs never share a record.
    Records must be time-ordered per user.
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError("rate must lie in [0, 1]")
    out = list(records)
    truth = []
    if rate == 0 or len(out) < 2:
        return out, truth
    rng = np.random.default_rng(seed)
    catalogue: dict[tuple, tuple[GeoPoint, str]] = {}
    for r in out:
        catalogue.setdefault(station_key(r.location), (r.location, r.lacid))
    places = list(catalogue.values())

    by_user: dict[str, list[int]] = {}
    for pos, r in enumerate(out):
        by_user.setdefault(r.phonenum, []).append(pos)
    for positions in by_user.values():
        skip = False
        for n, (i, j) in enumerate(zip(positions[:-1], positions[1:])):
            chosen = rng.uniform() < rate
            kind = "a" if rng.uniform() < 0.5 else "b"
            if skip or not chosen:
                skip = False
                continue
            skip = True
            prev, cur = out[i], out[j]
            base = replace(cur, location=prev.location, lacid=prev.lacid)
            dists = [great_circle_distance(prev.location, p, cfg.geo) for p, _ in places]
            if kind == "a":
                cands = [(d, k) for k, d in enumerate(dists) if d > 0]
                if cands:
                    loc, lac = places[min(cands)[1]]
                else:
                    loc, lac = _round5(offset_point(prev.location, 1.0, 0.0, cfg.geo)), prev.lacid
                obs = replace(base, stime=prev.etime, etime=max(base.etime, prev.etime),
                              location=loc, lacid=lac)
            else:
                far = int(np.argmax(dists))
                loc, lac = places[far]
                dist = dists[far]
                if dist < 2 * cfg.v_max_kmh / 3600:  # no station far enough even over 1 s
                    loc = _round5(offset_point(prev.location, 0.0, -50.0, cfg.geo))
                    lac, dist = prev.lacid, great_circle_distance(prev.location, loc, cfg.geo)
                gap = max(1, base.stime - prev.etime)
                if dist / (gap / 3600) <= 2 * cfg.v_max_kmh:
                    gap = max(1, int(dist / (2 * cfg.v_max_kmh) * 3600))
                obs = replace(base, stime=prev.etime + gap, location=loc, lacid=lac)
            out[j] = obs
            if n + 2 < len(positions):
                nxt = out[positions[n + 2]]
                need = 1 + math.ceil(great_circle_distance(prev.location, nxt.location, cfg.geo)
                                     / TRAVEL_KMH * 3600)
                delay = need - (nxt.stime - obs.etime)
                if delay > 0:
                    for k in positions[n + 2:]:
                        out[k] = replace(out[k], stime=out[k].stime + delay, etime=out[k].etime + delay)
            truth.append(AnomalyTruth(j, kind, obs.phonenum, obs.stime, obs.etime,
                                      prev.location, prev.lacid))
    return out, truth


def write_truth_csv(truth: Sequence[AnomalyTruth], stream) -> None:
    from .ingest import format_time
    stream.write("record_index,kind,phonenum,stime,etime,true_longitude,true_latitude,true_lacid\n")
    for t in truth:
        stream.write(f"{t.record_index},{t.kind},{t.phonenum},{format_time(t.stime)},{format_time(t.etime)},"
                     f"{t.true_location.longitude!r},{t.true_location.latitude!r},{t.true_lacid}\n")


def recovery_rate(cleaned: Sequence[UdrRecord], truth: Sequence[AnomalyTruth]) -> float:
    """Fraction of planted anomalies whose cleaned location equals the truth."""
    if not truth:
        return 1.0
    found = {(r.phonenum, r.stime, r.etime): r.location for r in cleaned}
    hits = sum(found.get((t.phonenum, t.stime, t.etime)) == t.true_location for t in truth)
    return hits / len(truth)


def bayes_one_step_accuracy(world: SynthWorld, persona: Persona) -> float:
    """Accuracy of the best predictor that knows the phase and the previous label.

    Exact: the per-phase transition matrices are composed into the day map,
    its stationary distribution gives the label distribution at each phase.
    """
    mats = step_matrices(world, persona)
    day = np.eye(world.n_stations)
    for m in mats:
        day = day @ m
    vals, vecs = np.linalg.eig(day.T)
    pi = np.real(vecs[:, np.argmin(np.abs(vals - 1))])
    pi = pi / pi.sum()
    acc = 0.0
    for m in mats:
        acc += float(pi @ m.max(axis=1))
        pi = pi @ m
    return acc / len(mats)
