"""Sensor log format: parse, write and sanity-check 50 Hz IMU recordings.

A log is UTF-8 CSV with eight columns::

    t,ax,ay,az,gx,gy,gz,flag

``t`` is seconds since stream start, accelerations are m/s^2, angular rates
rad/s, and ``flag`` is 0/1 ground truth. A single header row (first token
non-numeric) is allowed and skipped.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np

DEFAULT_RATE = 50.0
COLUMNS = ("t", "ax", "ay", "az", "gx", "gy", "gz", "flag")


class LogFormatError(ValueError):
    """Base class for malformed log input."""

    def __init__(self, message: str, row: int, column: int | None = None) -> None:
        super().__init__(message)
        self.row = row
        self.column = column


class LogParseError(LogFormatError):
    pass


class LogOrderError(LogFormatError):
    pass


class LogArityError(LogFormatError):
    pass


class ImuSample(NamedTuple):
    t: float
    ax: float
    ay: float
    az: float
    gx: float
    gy: float
    gz: float
    flag: bool


@dataclass(frozen=True)
class SampleStream:
    """Column-oriented container for an ordered run of :class:`ImuSample`.

    ``acc`` and ``gyro`` are ``(n, 3)`` arrays. Construction validates
    finiteness, non-negative time and strictly increasing timestamps.
    """

    t: np.ndarray
    acc: np.ndarray
    gyro: np.ndarray
    flag: np.ndarray
    nominal_rate: float = DEFAULT_RATE

    def __post_init__(self) -> None:
        t = np.asarray(self.t, dtype=float).reshape(-1)
        n = t.size
        acc = np.asarray(self.acc, dtype=float).reshape(n, 3)
        gyro = np.asarray(self.gyro, dtype=float).reshape(n, 3)
        flag = np.asarray(self.flag, dtype=bool).reshape(n)
        if not self.nominal_rate > 0 or not math.isfinite(self.nominal_rate):
            raise ValueError(f"nominal_rate must be positive, got {self.nominal_rate}")
        if n:
            if not np.all(np.isfinite(t)) or t[0] < 0:
                raise ValueError("timestamps must be finite and non-negative")
            if not (np.all(np.isfinite(acc)) and np.all(np.isfinite(gyro))):
                raise ValueError("channel values must be finite")
            bad = np.flatnonzero(np.diff(t) <= 0)
            if bad.size:
                raise ValueError(f"timestamps must strictly increase (sample {bad[0] + 1})")
        for name, arr in (("t", t), ("acc", acc), ("gyro", gyro), ("flag", flag)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_samples(cls, samples: list[ImuSample], nominal_rate: float | None = None) -> SampleStream:
        arr = np.array([s[:7] for s in samples], dtype=float).reshape(-1, 7)
        flags = np.array([bool(s.flag) for s in samples], dtype=bool)
        if nominal_rate is None:
            nominal_rate = estimate_rate(arr[:, 0])
        return cls(arr[:, 0], arr[:, 1:4], arr[:, 4:7], flags, nominal_rate)

    def __len__(self) -> int:
        return self.t.size

    def __getitem__(self, i: int) -> ImuSample:
        return ImuSample(
            float(self.t[i]),
            *(float(v) for v in self.acc[i]),
            *(float(v) for v in self.gyro[i]),
            bool(self.flag[i]),
        )

    def __iter__(self) -> Iterator[ImuSample]:
        for i in range(len(self)):
            yield self[i]

    @property
    def az(self) -> np.ndarray:
        return self.acc[:, 2]

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0]) if len(self) > 1 else 0.0


def estimate_rate(t: np.ndarray) -> float:
    if len(t) < 2:
        return DEFAULT_RATE
    span = float(t[-1] - t[0])
    return (len(t) - 1) / span


def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def parse_log(text: str | io.TextIOBase) -> SampleStream:
    """Parse the 8-column CSV log. Row numbers in errors are 1-based file lines."""
    if not isinstance(text, str):
        text = text.read()
    rows: list[list[float]] = []
    flags: list[bool] = []
    prev_t = -math.inf
    first_content = True
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        fields = [f.strip() for f in line.split(",")]
        if first_content:
            first_content = False
            if not _is_number(fields[0]):
                continue
        if len(fields) != len(COLUMNS):
            raise LogArityError(
                f"row {lineno}: expected {len(COLUMNS)} columns, found {len(fields)}", lineno
            )
        values = []
        for col, tok in enumerate(fields[:7], start=1):
            try:
                v = float(tok)
            except ValueError:
                raise LogParseError(
                    f"row {lineno}, column {col} ({COLUMNS[col - 1]}): not a number: {tok!r}",
                    lineno,
                    col,
                ) from None
            if not math.isfinite(v):
                raise LogParseError(
                    f"row {lineno}, column {col} ({COLUMNS[col - 1]}): non-finite value", lineno, col
                )
            values.append(v)
        if fields[7] not in ("0", "1"):
            raise LogParseError(f"row {lineno}, column 8 (flag): expected 0 or 1, got {fields[7]!r}", lineno, 8)
        t = values[0]
        if t < 0:
            raise LogParseError(f"row {lineno}, column 1 (t): negative timestamp", lineno, 1)
        if t <= prev_t:
            raise LogOrderError(f"row {lineno}: timestamp {t} does not increase on {prev_t}", lineno)
        prev_t = t
        rows.append(values)
        flags.append(fields[7] == "1")

    arr = np.array(rows, dtype=float).reshape(-1, 7)
    return SampleStream(arr[:, 0], arr[:, 1:4], arr[:, 4:7], np.array(flags, dtype=bool), estimate_rate(arr[:, 0]))


def write_log(stream: SampleStream) -> str:
    """Serialize without a header; floats use shortest round-trip repr."""
    out = io.StringIO()
    for i in range(len(stream)):
        vals = [stream.t[i], *stream.acc[i], *stream.gyro[i]]
        out.write(",".join(repr(float(v)) for v in vals))
        out.write(",1\n" if stream.flag[i] else ",0\n")
    return out.getvalue()


@dataclass
class RateReport:
    applicable: bool
    expected_period: float
    violations: list[tuple[int, float]] = field(default_factory=list)

    @property
    def conformant(self) -> bool:
        return self.applicable and not self.violations


def validate_rate(stream: SampleStream, expected: float = DEFAULT_RATE, tolerance: float = 0.1) -> RateReport:
    """List every gap (index of the later sample, gap seconds) off the expected period.

    Streams with fewer than two samples yield ``applicable=False``.
    """
    if not 0 < tolerance < 1:
        raise ValueError("tolerance must be in (0, 1)")
    if expected <= 0:
        raise ValueError("expected rate must be positive")
    period = 1.0 / expected
    if len(stream) < 2:
        return RateReport(False, period)
    gaps = np.diff(stream.t)
    idx = np.flatnonzero(np.abs(gaps - period) > tolerance * period)
    return RateReport(True, period, [(int(i) + 1, float(gaps[i])) for i in idx])
