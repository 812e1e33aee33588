"""Pothole detection from inertial streams, mask analytics and a deduplicating registry."""
from .detectors import ConfusionMatrix, DetectionEvent, detect_svm_stream, evaluate
from .features import Scaler, extract_features, make_windows
from .ingest import ImuSample, SampleStream, parse_log, write_log
from .registry import PotholeRecord, PotholeStore, haversine
from .simulator import RoadProfile, SimConfig, default_profile, simulate
from .svm import LinearSvmModel, predict, train

__version__ = "0.1.0"
