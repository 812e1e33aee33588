"""Event detectors over sample streams, plus confusion-matrix evaluation.

The SVM detector slides a window at half-window hops and goes deaf for a
refractory period after each positive. The four threshold baselines work on
raw acceleration and emit one event per contiguous run of qualifying samples.
"""
from __future__ import annotations

import io
import json
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .features import DEFAULT_WINDOW, Window, extract_features, samples_for, window_at
from .ingest import SampleStream
from .svm import LinearSvmModel, NotTrainedError

METHODS = ("svm", "z_thresh", "z_diff", "stdev_z", "g_zero")

DEFAULT_REFRACTORY = 1.0
Z_THRESH_T = 4.0
Z_DIFF_T = 3.0
STDEV_Z_WIN = 0.5
STDEV_Z_T = 1.5
G_ZERO_T = 2.0
G_ZERO_MIN_DUR = 0.06


@dataclass(frozen=True)
class DetectionEvent:
    t: float
    method: str
    value: float
    lat: float | None = None
    lon: float | None = None

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown detection method {self.method!r}")
        if not np.isfinite(self.t):
            raise ValueError("event time must be finite")

    @property
    def location(self) -> tuple[float, float] | None:
        if self.lat is None or self.lon is None:
            return None
        return self.lat, self.lon


def detect_svm_stream(
    model: LinearSvmModel | None,
    stream: SampleStream,
    win: float = DEFAULT_WINDOW,
    refractory: float = DEFAULT_REFRACTORY,
) -> list[DetectionEvent]:
    if model is None:
        raise NotTrainedError("SVM detection needs a trained model")
    if win <= 0 or refractory < 0:
        raise ValueError("need win > 0 and refractory >= 0")
    n = samples_for(win, stream.nominal_rate)
    hop = max(1, samples_for(win / 2, stream.nominal_rate))
    events: list[DetectionEvent] = []
    last_t = None
    for start in range(0, len(stream) - n + 1, hop):
        t = float(stream.t[start])
        if last_t is not None and t - last_t < refractory:
            continue
        margin = float(model.decision_function(extract_features(window_at(stream, start, n))))
        if margin > 0:
            events.append(DetectionEvent(t, "svm", margin))
            last_t = t
    return events


def _runs(mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Start and exclusive end index of every run of True."""
    edges = np.diff(np.concatenate([[0], np.asarray(mask, dtype=np.int8), [0]]))
    return np.flatnonzero(edges == 1), np.flatnonzero(edges == -1)


def _run_starts(mask: np.ndarray) -> np.ndarray:
    return _runs(mask)[0]


def _events(stream: SampleStream, idx: np.ndarray, values: np.ndarray, method: str) -> list[DetectionEvent]:
    return [DetectionEvent(float(stream.t[i]), method, float(values[i])) for i in idx]


def z_thresh(stream: SampleStream, T: float = Z_THRESH_T) -> list[DetectionEvent]:
    """|az - median(az)| > T."""
    if T <= 0:
        raise ValueError("threshold must be positive")
    if len(stream) == 0:
        return []
    dev = np.abs(stream.az - np.median(stream.az))
    return _events(stream, _run_starts(dev > T), dev, "z_thresh")


def z_diff(stream: SampleStream, T: float = Z_DIFF_T) -> list[DetectionEvent]:
    """|az[i] - az[i-1]| > T, reported at sample i."""
    if T <= 0:
        raise ValueError("threshold must be positive")
    if len(stream) < 2:
        return []
    step = np.concatenate([[0.0], np.abs(np.diff(stream.az))])
    return _events(stream, _run_starts(step > T), step, "z_diff")


def stdev_z(stream: SampleStream, win: float = STDEV_Z_WIN, T: float = STDEV_Z_T) -> list[DetectionEvent]:
    """Trailing population std of az over ``win`` seconds exceeds T.

    Events are stamped at the last sample of the first exceeding window.
    """
    if T <= 0:
        raise ValueError("threshold must be positive")
    n = samples_for(win, stream.nominal_rate)
    if n < 2:
        raise ValueError(f"stdev_z window of {win} s spans fewer than 2 samples")
    if len(stream) < n:
        return []
    sd = np.zeros(len(stream))
    sd[n - 1 :] = sliding_window_view(stream.az, n).std(axis=1)
    return _events(stream, _run_starts(sd > T), sd, "stdev_z")


def g_zero(stream: SampleStream, T: float = G_ZERO_T, min_dur: float = G_ZERO_MIN_DUR) -> list[DetectionEvent]:
    """All three axes below T in magnitude for at least ``min_dur`` seconds.

    A run of k samples lasts k / nominal_rate seconds; the event value is
    that duration.
    """
    if T <= 0 or min_dur < 0:
        raise ValueError("need T > 0 and min_dur >= 0")
    if len(stream) == 0:
        return []
    starts, ends = _runs(np.all(np.abs(stream.acc) < T, axis=1))
    events = []
    for s, e in zip(starts, ends):
        dur = (e - s) / stream.nominal_rate
        if dur >= min_dur:
            events.append(DetectionEvent(float(stream.t[s]), "g_zero", float(dur)))
    return events


def run_baseline(stream: SampleStream, method: str, threshold: float, **kw) -> list[DetectionEvent]:
    if method == "z_thresh":
        return z_thresh(stream, threshold)
    if method == "z_diff":
        return z_diff(stream, threshold)
    if method == "stdev_z":
        return stdev_z(stream, kw.get("win", STDEV_Z_WIN), threshold)
    if method == "g_zero":
        return g_zero(stream, threshold, kw.get("min_dur", G_ZERO_MIN_DUR))
    raise ValueError(f"unknown baseline {method!r}")


def attach_locations(events: list[DetectionEvent], track: np.ndarray) -> list[DetectionEvent]:
    """Nearest-timestamp lookup in a ``(k, 3)`` array of ``t, lat, lon`` rows."""
    track = np.asarray(track, dtype=float).reshape(-1, 3)
    if track.shape[0] == 0:
        return list(events)
    order = np.argsort(track[:, 0])
    tt = track[order, 0]
    out = []
    for ev in events:
        k = int(np.searchsorted(tt, ev.t))
        cands = [c for c in (k - 1, k) if 0 <= c < tt.size]
        best = min(cands, key=lambda c: (abs(tt[c] - ev.t), c))
        lat, lon = track[order[best], 1:]
        out.append(DetectionEvent(ev.t, ev.method, ev.value, float(lat), float(lon)))
    return out


def events_to_csv(events: Sequence[DetectionEvent]) -> str:
    out = io.StringIO()
    out.write("t,method,value,lat,lon\n")
    for ev in events:
        lat = "" if ev.lat is None else repr(ev.lat)
        lon = "" if ev.lon is None else repr(ev.lon)
        out.write(f"{ev.t!r},{ev.method},{ev.value!r},{lat},{lon}\n")
    return out.getvalue()


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts over labeled windows with pothole as the positive class."""

    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else float("nan")

    @property
    def pothole_recall(self) -> float:
        return _ratio(self.tp, self.tp + self.fn)

    @property
    def plain_recall(self) -> float:
        return _ratio(self.tn, self.tn + self.fp)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["accuracy"] = self.accuracy if self.total else None
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _ratio(a: int, b: int) -> float:
    return a / b if b else float("nan")


def evaluate(labels: Sequence[bool] | Sequence[Window], predictions: Sequence[bool]) -> ConfusionMatrix:
    truth = [w.label if isinstance(w, Window) else bool(w) for w in labels]
    pred = [bool(p) for p in predictions]
    if len(truth) != len(pred):
        raise ValueError(f"{len(truth)} labels but {len(pred)} predictions")
    tp = sum(t and p for t, p in zip(truth, pred))
    fp = sum(p and not t for t, p in zip(truth, pred))
    fn = sum(t and not p for t, p in zip(truth, pred))
    return ConfusionMatrix(tp, fp, fn, len(truth) - tp - fp - fn)


def _pct(x: float) -> str:
    return "n/a" if x != x else f"{100 * x:.1f}%"


def render_confusion(cm: ConfusionMatrix) -> str:
    """Plain-text 2x2 table: rows are the target class, columns the output.

    Class 0 is pothole and class 1 is plain road. Each cell shows the count
    and its share of all windows; the last column is per-target recall, the
    last row per-output precision, and the corner the overall accuracy.
    """
    n = cm.total
    cells = [[cm.tp, cm.fn], [cm.fp, cm.tn]]  # [target][output]

    def cell(c: int) -> str:
        return f"{c} {_pct(c / n) if n else 'n/a'}"

    col_prec = [_ratio(cm.tp, cm.tp + cm.fp), _ratio(cm.tn, cm.tn + cm.fn)]
    header = ["", "Output 0 (pothole)", "Output 1 (plain)", "Recall"]
    rows = [
        ["Target 0 (pothole)", cell(cells[0][0]), cell(cells[0][1]), _pct(cm.pothole_recall)],
        ["Target 1 (plain)", cell(cells[1][0]), cell(cells[1][1]), _pct(cm.plain_recall)],
        ["Precision", _pct(col_prec[0]), _pct(col_prec[1]), _pct(cm.accuracy)],
    ]
    widths = [max(len(r[k]) for r in [header, *rows]) for k in range(4)]
    lines = ["  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() for r in [header, *rows]]
    lines.append(f"Overall accuracy {_pct(cm.accuracy)} ({cm.tp + cm.tn}/{n}), "
                 f"failure rate {_pct(1 - cm.accuracy) if n else 'n/a'}")
    return "\n".join(lines) + "\n"
