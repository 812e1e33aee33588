"""Windowing and the six per-window statistics fed to the classifier."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .ingest import SampleStream

FEATURE_NAMES = ("acc_mean", "acc_std", "acc_range", "gyro_mean", "gyro_std", "gyro_range")
N_FEATURES = len(FEATURE_NAMES)

DEFAULT_WINDOW = 1.0
DEFAULT_HOP = 0.5


@dataclass(frozen=True)
class Window:
    start: int
    stop: int
    start_t: float
    label: bool
    acc: np.ndarray
    gyro: np.ndarray

    def __len__(self) -> int:
        return self.stop - self.start


def samples_for(seconds: float, rate: float) -> int:
    # estimated rates like 49.99999999999 must not lose a sample
    return int(math.floor(seconds * rate + 1e-6))


def window_at(stream: SampleStream, start: int, length: int) -> Window:
    stop = start + length
    return Window(
        start,
        stop,
        float(stream.t[start]),
        bool(stream.flag[start:stop].any()),
        stream.acc[start:stop],
        stream.gyro[start:stop],
    )


def make_windows(
    stream: SampleStream, win_seconds: float = DEFAULT_WINDOW, hop_seconds: float = DEFAULT_HOP
) -> list[Window]:
    if not 0 < hop_seconds <= win_seconds:
        raise ValueError("need 0 < hop_seconds <= win_seconds")
    n = samples_for(win_seconds, stream.nominal_rate)
    hop = samples_for(hop_seconds, stream.nominal_rate)
    if n < 1 or hop < 1:
        raise ValueError("window and hop must each span at least one sample")
    return [window_at(stream, s, n) for s in range(0, len(stream) - n + 1, hop)]


def extract_features(w: Window) -> np.ndarray:
    """[mean, std, range] of |acc| followed by the same for |gyro|; population std."""
    if len(w) == 0:
        raise ValueError("empty window")
    out = np.empty(N_FEATURES)
    for k, block in enumerate((w.acc, w.gyro)):
        mag = np.sqrt(np.einsum("ij,ij->i", block, block))
        out[3 * k] = mag.mean()
        out[3 * k + 1] = mag.std()
        out[3 * k + 2] = mag.max() - mag.min()
    return out


def feature_matrix(windows: list[Window]) -> tuple[np.ndarray, np.ndarray]:
    X = np.array([extract_features(w) for w in windows]).reshape(-1, N_FEATURES)
    y = np.array([w.label for w in windows], dtype=bool)
    return X, y


def labeled_windows(
    stream: SampleStream,
    win_seconds: float = DEFAULT_WINDOW,
    hop_seconds: float = DEFAULT_HOP,
    n_negative: int | None = None,
) -> list[Window]:
    """Training windows: one per flag onset plus flag-free windows from the hop grid.

    Each positive window starts at the first flagged sample of a run, so it
    covers exactly the labeled second after the pothole. Negatives are the
    hop-grid windows containing no flag at all; when ``n_negative`` is given
    they are thinned to that many, evenly spaced over the stream.
    """
    n = samples_for(win_seconds, stream.nominal_rate)
    pos = [window_at(stream, s, n) for s in flag_onsets(stream) if s + n <= len(stream)]
    neg = [w for w in make_windows(stream, win_seconds, hop_seconds) if not w.label]
    if n_negative is not None and n_negative < len(neg):
        if n_negative <= 0:
            neg = []
        else:
            pick = np.linspace(0, len(neg) - 1, n_negative).round().astype(int)
            neg = [neg[i] for i in pick]
    return sorted(pos + neg, key=lambda w: w.start)


def flag_onsets(stream: SampleStream) -> list[int]:
    f = stream.flag.astype(np.int8)
    if f.size == 0:
        return []
    starts = np.flatnonzero(np.diff(f, prepend=0) == 1)
    return [int(s) for s in starts]


@dataclass(frozen=True, eq=False)
class Scaler:
    """Per-feature z-score parameters; zero deviations are stored as 1."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self) -> None:
        mean = np.array(self.mean, dtype=float).reshape(-1)
        std = np.array(self.std, dtype=float).reshape(-1)
        if mean.shape != std.shape:
            raise ValueError("mean and std must have the same length")
        if np.any(std < 0):
            raise ValueError("scaler std entries must be >= 0")
        std[std == 0] = 1.0
        mean.setflags(write=False)
        std.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Scaler):
            return NotImplemented
        return np.array_equal(self.mean, other.mean) and np.array_equal(self.std, other.std)

    __hash__ = None

    @classmethod
    def identity(cls, n: int = N_FEATURES) -> Scaler:
        return cls(np.zeros(n), np.ones(n))

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.std


def fit_scaler(features: np.ndarray) -> Scaler:
    X = np.asarray(features, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[0] == 0:
        raise ValueError("cannot fit a scaler on an empty feature set")
    return Scaler(X.mean(axis=0), X.std(axis=0))


def apply_scaler(s: Scaler, fv: np.ndarray) -> np.ndarray:
    return s.transform(fv)


def write_feature_csv(X: np.ndarray, y: np.ndarray) -> str:
    out = io.StringIO()
    out.write(",".join(FEATURE_NAMES) + ",label\n")
    for row, label in zip(X, y):
        out.write(",".join(repr(float(v)) for v in row) + (",1\n" if label else ",0\n"))
    return out.getvalue()
