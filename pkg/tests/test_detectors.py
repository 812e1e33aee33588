import numpy as np
import pytest

from roadsense.detectors import (
    ConfusionMatrix,
    DetectionEvent,
    attach_locations,
    detect_svm_stream,
    evaluate,
    events_to_csv,
    g_zero,
    render_confusion,
    run_baseline,
    stdev_z,
    z_diff,
    z_thresh,
)
from roadsense.features import Scaler
from roadsense.simulator import Pothole, RoadProfile, SimConfig, simulate
from roadsense.svm import LinearSvmModel, NotTrainedError

import oracles
from conftest import make_stream

G = 9.81


def test_z_thresh_single_spike():
    az = np.full(100, G)
    az[50] = 15.0
    ev = z_thresh(make_stream(az), 4.0)
    assert [e.t for e in ev] == [1.0]


def test_z_thresh_dip_is_one_event():
    az = np.full(100, G)
    az[40:45] -= 6.0 * np.sin(np.pi * (np.arange(5) + 0.5) / 5)
    assert len(z_thresh(make_stream(az), 4.0)) == 1


def test_z_diff_step_and_ramp():
    step = np.full(100, G)
    step[60:] += 5.0
    ev = z_diff(make_stream(step), 3.0)
    assert [e.t for e in ev] == [pytest.approx(60 / 50)]
    ramp = G + np.linspace(0, 20, 100)  # 0.2 per sample
    assert z_diff(make_stream(ramp), 3.0) == []


def test_stdev_z_alternating_fires_at_first_full_window():
    az = np.where(np.arange(100) % 2 == 0, 9.0, 11.0)
    ev = stdev_z(make_stream(az), 0.5, 0.5)
    assert len(ev) == 1
    assert ev[0].t == pytest.approx(24 / 50)  # last sample of the first 25-sample window


def test_stdev_z_window_too_short():
    with pytest.raises(ValueError):
        stdev_z(make_stream(np.full(100, G)), 0.01, 1.0)


def test_g_zero_duration():
    az = np.full(200, G)
    az[100:105] = 0.5  # 5 samples = 0.1 s
    ev = g_zero(make_stream(az), 2.0, 0.06)
    assert len(ev) == 1 and ev[0].value == pytest.approx(0.1)
    az2 = np.full(200, G)
    az2[100:102] = 0.5  # 0.04 s
    assert g_zero(make_stream(az2), 2.0, 0.06) == []


def test_threshold_must_be_positive():
    s = make_stream(np.full(10, G))
    for fn in (z_thresh, z_diff):
        with pytest.raises(ValueError):
            fn(s, 0.0)
    with pytest.raises(ValueError):
        run_baseline(s, "nope", 1.0)


@pytest.mark.parametrize("seed", range(5))
def test_baselines_match_bruteforce(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(30, 2000))
    az = G + rng.normal(0, 2, n)
    az[rng.integers(0, n, 5)] -= 9
    acc = np.column_stack([rng.normal(0, 1, n), rng.normal(0, 1, n), az])
    s = make_stream(az)
    s = type(s)(s.t, acc, s.gyro, s.flag, 50.0)
    t, azl, accl = s.t.tolist(), az.tolist(), acc.tolist()
    assert [e.t for e in z_thresh(s, 3.0)] == oracles.z_thresh(t, azl, 3.0)
    assert [e.t for e in z_diff(s, 3.0)] == oracles.z_diff(t, azl, 3.0)
    assert [e.t for e in stdev_z(s, 0.5, 2.2)] == oracles.stdev_z(t, azl, 25, 2.2)
    assert [e.t for e in g_zero(s, 2.0, 0.02)] == oracles.g_zero(t, accl, 2.0, 0.02, 50.0)


def _const_model(margin):
    return LinearSvmModel(np.zeros(6), margin, Scaler.identity())


def test_refractory_example():
    s = make_stream(np.full(500, G))  # 10 s
    ev = detect_svm_stream(_const_model(1.0), s, 1.0, 1.0)
    times = [e.t for e in ev]
    assert times == [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]
    assert all(b - a >= 1.0 for a, b in zip(times, times[1:]))


def test_all_plain_stream_has_no_events():
    assert detect_svm_stream(_const_model(-1.0), make_stream(np.full(500, G)), 1.0, 1.0) == []


def test_detect_requires_model():
    with pytest.raises(NotTrainedError):
        detect_svm_stream(None, make_stream(np.full(100, G)))


def test_three_grid_aligned_potholes(fixture_model):
    holes = tuple(Pothole(p, 0.1, 0.6) for p in (100.0, 250.0, 400.0))
    s = simulate(RoadProfile(500.0, holes, 0.3), SimConfig(speed=10.0, seed=1))
    ev = detect_svm_stream(fixture_model, s, 1.0, 1.0)
    onsets = [10.0, 25.0, 40.0]
    for t0 in onsets:
        near = [e for e in ev if abs(e.t - t0) <= 0.5 + 1e-9]
        assert len(near) >= 1
    assert all(min(abs(e.t - t0) for t0 in onsets) <= 1.5 for e in ev)


def test_attach_locations_nearest():
    track = np.array([[0.0, 1.0, 2.0], [1.0, 3.0, 4.0], [2.0, 5.0, 6.0]])
    ev = attach_locations([DetectionEvent(0.9, "svm", 1.0), DetectionEvent(1.6, "svm", 1.0)], track)
    assert ev[0].location == (3.0, 4.0) and ev[1].location == (5.0, 6.0)


def test_events_csv():
    text = events_to_csv([DetectionEvent(1.5, "z_thresh", 4.25), DetectionEvent(2.0, "svm", 0.5, 1.0, 2.0)])
    assert text.splitlines() == ["t,method,value,lat,lon", "1.5,z_thresh,4.25,,", "2.0,svm,0.5,1.0,2.0"]


def test_unknown_method_event():
    with pytest.raises(ValueError):
        DetectionEvent(0.0, "magic", 1.0)


def test_evaluate_counts():
    truth = [True] * 26 + [False] * 26
    pred = [True] * 26 + [False] * 25 + [True]
    cm = evaluate(truth, pred)
    assert (cm.tp, cm.fp, cm.fn, cm.tn) == (26, 1, 0, 25)
    assert cm.accuracy == pytest.approx(51 / 52)
    assert evaluate(truth, [not p for p in truth]).accuracy == 0.0
    with pytest.raises(ValueError):
        evaluate([True], [True, False])


def test_empty_confusion():
    cm = ConfusionMatrix(0, 0, 0, 0)
    assert cm.to_dict()["accuracy"] is None
    assert "n/a" in render_confusion(cm)


def test_render_confusion_orientation():
    text = render_confusion(ConfusionMatrix(tp=26, fp=1, fn=0, tn=25))
    lines = text.splitlines()
    assert lines[1].startswith("Target 0 (pothole)") and "26 50.0%" in lines[1]
    assert lines[2].startswith("Target 1 (plain)") and "1 1.9%" in lines[2]
    assert "98.1%" in lines[-1] and "51/52" in lines[-1]
