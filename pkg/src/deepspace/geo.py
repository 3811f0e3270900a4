"""Spherical-earth distance and speed helpers.

Coordinates are decimal degrees everywhere outside this module; timestamps
are whole seconds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import NonPositiveDuration

EARTH_RADIUS_KM = 6371.0


@dataclass(frozen=True)
class GeoPoint:
    longitude: float
    latitude: float

    def __post_init__(self):
        lon, lat = self.longitude, self.latitude
        if not (math.isfinite(lon) and math.isfinite(lat)):
            raise ValueError(f"non-finite coordinate ({lon}, {lat})")
        if not -180.0 <= lon <= 180.0:
            raise ValueError(f"longitude {lon} outside [-180, 180]")
        if not -90.0 <= lat <= 90.0:
            raise ValueError(f"latitude {lat} outside [-90, 90]")


@dataclass(frozen=True)
class GeoConfig:
    earth_radius_km: float = EARTH_RADIUS_KM

    def __post_init__(self):
        if not self.earth_radius_km > 0:
            raise ValueError("earth_radius_km must be positive")


def great_circle_distance(a: GeoPoint, b: GeoPoint, cfg: GeoConfig = GeoConfig()) -> float:
    """Spherical law-of-cosines distance in kilometres.

    The cosine of the central angle is evaluated as
    ``cos(dlat) - 2 cos(lat_a) cos(lat_b) sin^2(dlon / 2)``, which equals
    ``cos lat_a cos lat_b cos dlon + sin lat_a sin lat_b`` but is exactly 1 for
    coincident points.
    """
    lat_a = math.radians(a.latitude)
    lat_b = math.radians(b.latitude)
    dlat = abs(lat_a - lat_b)
    dlon = abs(math.radians(b.longitude - a.longitude))
    cosang = math.cos(dlat) - 2.0 * (math.cos(lat_a) * math.cos(lat_b)) * math.sin(dlon / 2) ** 2
    cosang = min(1.0, max(-1.0, cosang))
    return cfg.earth_radius_km * math.acos(cosang)


def travel_speed(distance_km: float, t_start: int, t_end: int) -> float:
    """Average speed in km/h between two timestamps given in seconds."""
    elapsed = t_end - t_start
    if elapsed <= 0:
        raise NonPositiveDuration(f"t_end ({t_end}) must be after t_start ({t_start})")
    return distance_km / (elapsed / 3600.0)


def offset_point(origin: GeoPoint, east_km: float, north_km: float,
                 cfg: GeoConfig = GeoConfig()) -> GeoPoint:
    """Move ``origin`` by a small local east/north displacement."""
    dlat = math.degrees(north_km / cfg.earth_radius_km)
    dlon = math.degrees(east_km / (cfg.earth_radius_km * math.cos(math.radians(origin.latitude))))
    return GeoPoint(origin.longitude + dlon, origin.latitude + dlat)
