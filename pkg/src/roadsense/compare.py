"""Threshold sweeps of the baseline detectors against labeled ground truth."""
from __future__ import annotations

import io
import json
from dataclasses import asdict, dataclass

from .detectors import (
    DEFAULT_REFRACTORY,
    DetectionEvent,
    detect_svm_stream,
    run_baseline,
)
from .features import DEFAULT_WINDOW, flag_onsets
from .ingest import SampleStream
from .simulator import GRAVITY, LABEL_SECONDS
from .svm import LinearSvmModel

DEFAULT_SWEEP: dict[str, tuple[float, ...]] = {
    "z_thresh": (2.0, 3.0, 4.0, 5.0, 6.0),
    "z_diff": (2.0, 3.0, 4.0, 5.0, 6.0),
    "stdev_z": (0.5, 1.0, 1.5, 2.0, 2.5),
    "g_zero": (1.0, 2.0, 3.0),
}


class GroundTruthError(ValueError):
    pass


@dataclass(frozen=True)
class SweepRow:
    method: str
    threshold: float | None
    g_ratio: float | None
    actual: int
    detected: int
    false_alarms: int
    events: int

    @property
    def detected_pct(self) -> float | None:
        return 100.0 * self.detected / self.actual if self.actual else None


def score_events(
    events: list[DetectionEvent], onsets: list[float], before: float = DEFAULT_WINDOW, after: float = LABEL_SECONDS
) -> tuple[int, int]:
    """(potholes hit, unmatched events).

    An event matches a pothole when it falls in ``[onset - before, onset + after)``;
    ``before`` covers windows stamped at their start that end on the pothole.
    """
    hit = set()
    false_alarms = 0
    for ev in events:
        matched = [k for k, t0 in enumerate(onsets) if t0 - before <= ev.t < t0 + after]
        if matched:
            hit.update(matched)
        else:
            false_alarms += 1
    return len(hit), false_alarms


def parse_sweep(specs: list[str]) -> dict[str, tuple[float, ...]]:
    """``["z_thresh=2,3", "g_zero=1.5"]`` -> ordered mapping of thresholds."""
    out: dict[str, tuple[float, ...]] = {}
    for entry in specs:
        name, sep, values = entry.partition("=")
        name = name.strip()
        if not sep or name not in DEFAULT_SWEEP:
            raise ValueError(f"bad sweep entry {entry!r}; use METHOD=T1,T2 with METHOD in {sorted(DEFAULT_SWEEP)}")
        try:
            ts = tuple(float(v) for v in values.split(",") if v.strip())
        except ValueError:
            raise ValueError(f"bad threshold list in {entry!r}") from None
        if not ts or any(t <= 0 for t in ts):
            raise ValueError(f"thresholds in {entry!r} must be positive")
        out[name] = out.get(name, ()) + ts
    return out


def compare_detectors(
    stream: SampleStream,
    sweep: dict[str, tuple[float, ...]] | None = None,
    model: LinearSvmModel | None = None,
    win: float = DEFAULT_WINDOW,
    refractory: float = DEFAULT_REFRACTORY,
    allow_unlabeled: bool = False,
) -> list[SweepRow]:
    """One row per (baseline, threshold) plus one SVM row when a model is given."""
    onset_idx = flag_onsets(stream)
    if not onset_idx and not allow_unlabeled:
        raise GroundTruthError(
            "the log has no flagged samples; detector comparison needs ground-truth pothole flags"
        )
    onsets = [float(stream.t[i]) for i in onset_idx]
    sweep = DEFAULT_SWEEP if sweep is None else sweep
    rows = []
    for method, thresholds in sweep.items():
        for T in thresholds:
            events = run_baseline(stream, method, T)
            hit, fa = score_events(events, onsets, win)
            rows.append(SweepRow(method, T, T / GRAVITY, len(onsets), hit, fa, len(events)))
    if model is not None:
        events = detect_svm_stream(model, stream, win, refractory)
        hit, fa = score_events(events, onsets, win)
        rows.append(SweepRow("svm", None, None, len(onsets), hit, fa, len(events)))
    return rows


def render_sweep(rows: list[SweepRow]) -> str:
    header = ("method", "threshold", "g_ratio", "actual", "detected", "detected_%", "false_alarms")
    table = [header]
    for r in rows:
        table.append((
            r.method,
            "-" if r.threshold is None else f"{r.threshold:g}",
            "-" if r.g_ratio is None else f"{r.g_ratio:.3f}",
            str(r.actual),
            str(r.detected),
            "n/a" if r.detected_pct is None else f"{r.detected_pct:.1f}",
            str(r.false_alarms),
        ))
    widths = [max(len(row[k]) for row in table) for k in range(len(header))]
    out = io.StringIO()
    for row in table:
        out.write("  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip() + "\n")
    return out.getvalue()


def sweep_json(rows: list[SweepRow]) -> str:
    return json.dumps([{**asdict(r), "detected_pct": r.detected_pct} for r in rows], sort_keys=True)
