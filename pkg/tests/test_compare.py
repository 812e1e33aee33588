import json

import numpy as np
import pytest

from roadsense.compare import (
    DEFAULT_SWEEP,
    GroundTruthError,
    compare_detectors,
    parse_sweep,
    render_sweep,
    score_events,
    sweep_json,
)
from roadsense.detectors import DetectionEvent
from roadsense.simulator import RoadProfile, SimConfig, simulate


def test_score_events_window():
    ev = [DetectionEvent(t, "z_thresh", 1.0) for t in (9.0, 10.5, 30.0)]
    assert score_events(ev, [10.0, 50.0]) == (1, 1)
    assert score_events([], [10.0]) == (0, 0)


def test_parse_sweep():
    assert parse_sweep(["z_thresh=2,3", "g_zero=1.5", "z_thresh=4"]) == {"z_thresh": (2.0, 3.0, 4.0), "g_zero": (1.5,)}
    for bad in (["svm=1"], ["z_thresh"], ["z_thresh=a"], ["z_thresh=-1"], ["z_thresh="]):
        with pytest.raises(ValueError):
            parse_sweep(bad)


def test_quiescent_road_reports_nothing():
    s = simulate(RoadProfile(200.0, (), 0.0), SimConfig())
    rows = compare_detectors(s, allow_unlabeled=True)
    assert len(rows) == sum(len(v) for v in DEFAULT_SWEEP.values())
    assert all(r.actual == 0 and r.detected == 0 and r.false_alarms == 0 for r in rows)
    assert all(r.detected_pct is None for r in rows)


def test_unlabeled_log_rejected():
    s = simulate(RoadProfile(200.0, (), 0.3), SimConfig())
    with pytest.raises(GroundTruthError):
        compare_detectors(s)


def test_single_grid_point(fixture_stream):
    rows = compare_detectors(fixture_stream, {"z_thresh": (4.0,)})
    assert len(rows) == 1
    r = rows[0]
    assert r.method == "z_thresh" and r.actual == 26 and r.g_ratio == pytest.approx(4.0 / 9.81)
    assert 0 <= r.detected <= 26


def test_svm_row(fixture_stream, fixture_model):
    rows = compare_detectors(fixture_stream, {}, fixture_model)
    assert [r.method for r in rows] == ["svm"]
    assert rows[0].detected == 26


def test_render_and_json(fixture_stream):
    rows = compare_detectors(fixture_stream, {"g_zero": (2.0,), "stdev_z": (1.5,)})
    table = render_sweep(rows).splitlines()
    assert table[0].split()[:3] == ["method", "threshold", "g_ratio"]
    assert len(table) == 3
    data = json.loads(sweep_json(rows))
    assert {d["method"] for d in data} == {"g_zero", "stdev_z"}
