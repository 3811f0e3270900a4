"""UDR record parsing and cleaning.

Cleaning runs in three stages: dirty-record removal, per-user time ordering,
and a single propagating pass that undoes base-station switching jumps.
"""
from __future__ import annotations

import calendar
import csv
import io
import time
from dataclasses import dataclass, field, replace
from typing import IO, Iterable, Sequence

from .errors import MissingHeader
from .geo import GeoConfig, GeoPoint, great_circle_distance, travel_speed

FIELDS = ("phonenum", "stime", "etime", "host", "appid", "url", "lacid", "longitude", "latitude")
REQUIRED = ("phonenum", "stime", "etime", "lacid", "longitude", "latitude")
TIME_FORMAT = "%Y-%m-%d %H:%M:%S"


def parse_time(text: str) -> int:
    """Wall-clock ``YYYY-MM-DD HH:MM:SS`` to integer seconds, no timezone shift."""
    return calendar.timegm(time.strptime(text.strip(), TIME_FORMAT))


def format_time(seconds: int) -> str:
    return time.strftime(TIME_FORMAT, time.gmtime(seconds))


@dataclass(frozen=True)
class UdrRecord:
    phonenum: str
    stime: int
    etime: int
    lacid: str
    location: GeoPoint
    host: str = ""
    appid: str = ""
    url: str = ""

    def as_row(self) -> dict:
        return {
            "phonenum": self.phonenum,
            "stime": format_time(self.stime),
            "etime": format_time(self.etime),
            "host": self.host,
            "appid": self.appid,
            "url": self.url,
            "lacid": self.lacid,
            "longitude": repr(float(self.location.longitude)),
            "latitude": repr(float(self.location.latitude)),
        }


@dataclass(frozen=True)
class RejectedLine:
    line_number: int
    reason: str
    raw: str = ""


@dataclass(frozen=True)
class CleanConfig:
    v_max_kmh: float = 150.0
    geo: GeoConfig = field(default_factory=GeoConfig)

    def __post_init__(self):
        if not self.v_max_kmh > 0:
            raise ValueError("v_max_kmh must be positive")


@dataclass
class Trajectory:
    user: str
    points: list[UdrRecord]

    def __len__(self):
        return len(self.points)


def parse_udr_csv(stream: IO) -> tuple[list[UdrRecord], list[RejectedLine]]:
    """Parse a UDR CSV stream (bytes or text).

    Returns the accepted records and one :class:`RejectedLine` per malformed
    data row; every data row ends up in exactly one of the two lists.
    """
    data = stream.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    lines = data.splitlines()
    if not lines:
        raise MissingHeader("empty input, no header row")
    header = next(csv.reader([lines[0]]))
    header = [h.strip() for h in header]
    missing = [f for f in REQUIRED if f not in header]
    if missing:
        raise MissingHeader(f"header lacks required fields: {', '.join(missing)}")

    records, rejected = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        row = next(csv.reader([line]), [])
        if len(row) != len(header):
            rejected.append(RejectedLine(lineno, "WrongFieldCount", line))
            continue
        values = dict(zip(header, (v.strip() for v in row)))
        empty = [f for f in REQUIRED if not values[f]]
        if empty:
            rejected.append(RejectedLine(lineno, "EmptyRequiredField", line))
            continue
        try:
            stime = parse_time(values["stime"])
            etime = parse_time(values["etime"])
        except ValueError:
            rejected.append(RejectedLine(lineno, "BadTimestamp", line))
            continue
        try:
            loc = GeoPoint(float(values["longitude"]), float(values["latitude"]))
        except ValueError:
            rejected.append(RejectedLine(lineno, "BadCoordinate", line))
            continue
        records.append(UdrRecord(
            phonenum=values["phonenum"], stime=stime, etime=etime,
            lacid=values["lacid"], location=loc,
            host=values.get("host", ""), appid=values.get("appid", ""), url=values.get("url", ""),
        ))
    return records, rejected


def write_udr_csv(records: Iterable[UdrRecord], stream: IO[str]) -> None:
    writer = csv.DictWriter(stream, fieldnames=FIELDS, lineterminator="\n")
    writer.writeheader()
    for rec in records:
        writer.writerow(rec.as_row())


def udr_csv_text(records: Iterable[UdrRecord]) -> str:
    buf = io.StringIO()
    write_udr_csv(records, buf)
    return buf.getvalue()


def _is_dirty(rec: UdrRecord) -> bool:
    if not rec.phonenum or not rec.lacid:
        return True
    return rec.etime < rec.stime


def drop_dirty(records: Iterable[UdrRecord]) -> list[UdrRecord]:
    """Remove exact duplicates and incomplete or time-inverted records."""
    seen = set()
    out = []
    for rec in records:
        if _is_dirty(rec) or rec in seen:
            continue
        seen.add(rec)
        out.append(rec)
    return out


def group_and_sort(records: Iterable[UdrRecord]) -> list[Trajectory]:
    """One trajectory per user, in order of first appearance, sorted by (stime, etime)."""
    groups: dict[str, list[UdrRecord]] = {}
    for rec in records:
        groups.setdefault(rec.phonenum, []).append(rec)
    # sorted() is stable, so equal keys keep input order
    return [Trajectory(user, sorted(pts, key=lambda r: (r.stime, r.etime)))
            for user, pts in groups.items()]


def fix_switching(traj: Trajectory, cfg: CleanConfig = CleanConfig()) -> Trajectory:
    """Undo base-station switching jumps in one left-to-right pass.

    A record whose start coincides with the previous record's end at a
    different location, or that implies a speed above ``cfg.v_max_kmh``,
    takes over the previous record's location and LAC.  Corrected records
    feed the next comparison, so the fix propagates along the trajectory.
    """
    pts = list(traj.points)
    for j in range(1, len(pts)):
        prev, cur = pts[j - 1], pts[j]
        if cur.location == prev.location:
            continue
        if prev.etime == cur.stime:
            jump = True
        else:
            # overlapping records are judged over a 1 s gap
            gap_end = max(cur.stime, prev.etime + 1)
            dist = great_circle_distance(prev.location, cur.location, cfg.geo)
            jump = travel_speed(dist, prev.etime, gap_end) > cfg.v_max_kmh
        if jump:
            pts[j] = replace(cur, location=prev.location, lacid=prev.lacid)
    return Trajectory(traj.user, pts)


def clean_pipeline(records: Iterable[UdrRecord], cfg: CleanConfig = CleanConfig()) -> list[Trajectory]:
    trajs = group_and_sort(drop_dirty(records))
    fixed = [fix_switching(t, cfg) for t in trajs]
    # a relocated record can become an exact copy of its predecessor
    return [Trajectory(t.user, drop_dirty(t.points)) for t in fixed]


def flatten(trajectories: Sequence[Trajectory]) -> list[UdrRecord]:
    return [p for t in trajectories for p in t.points]
