"""Hierarchical (coarse LAC -> fine station) online trajectory prediction."""
from .geo import GeoConfig, GeoPoint, great_circle_distance, travel_speed
from .ingest import CleanConfig, Trajectory, UdrRecord, clean_pipeline, parse_udr_csv
from .encode import Sample, StationIndex, build_station_index, encode_trajectory, make_windows
from .nn import ArchConfig, CnnModel, TrainConfig, init_model
from .hier import HierModel, StreamEvent, build_hier_model, predict, train_online

__version__ = "0.1.0"

__all__ = [
    "GeoConfig", "GeoPoint", "great_circle_distance", "travel_speed",
    "CleanConfig", "Trajectory", "UdrRecord", "clean_pipeline", "parse_udr_csv",
    "Sample", "StationIndex", "build_station_index", "encode_trajectory", "make_windows",
    "ArchConfig", "CnnModel", "TrainConfig", "init_model",
    "HierModel", "StreamEvent", "build_hier_model", "predict", "train_online",
]
