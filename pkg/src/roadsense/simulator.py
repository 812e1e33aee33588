"""Synthetic labeled IMU traces of a vehicle crossing a pothole-strewn road.

Every pothole produces a half-sine dip on ``az`` of amplitude
``A = min(2 g, g * depth / 0.05)`` lasting ``d = pothole_length / speed``,
then a rebound half-sine of ``A / 2`` for another ``d``. Pitch rate ``gx``
swings ``+depth/0.05`` rad/s over the dip and the negative of that over the
rebound. The flag column is true for one second from the dip onset.

Random numbers
--------------
All randomness comes from :class:`SplitMix64`, chosen because it is a few
lines in any language:

* state_k = seed + k * 0x9E3779B97F4A7C15 (mod 2**64), k = 1, 2, ...
* z = state_k; z = (z ^ z >> 30) * 0xBF58476D1CE4E5B9;
  z = (z ^ z >> 27) * 0x94D049BB133111EB; out = z ^ z >> 31
* uniform = ((out >> 11) + 0.5) / 2**53, strictly inside (0, 1)
* normal = sqrt(-2 ln u1) * cos(2 pi u2) from two consecutive uniforms

``simulate`` draws 3 normals per sample in the order ax, ay, az.
``default_profile`` draws n uniforms for positions, then n for depths, then
n for lengths.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .ingest import SampleStream

GRAVITY = 9.81
EARTH_RADIUS_M = 6_371_000.0
METERS_PER_DEG = EARTH_RADIUS_M * math.pi / 180.0
LABEL_SECONDS = 1.0
# at most 20 m/s, a 1 s label never reaches the next pothole
MAX_SPEED = 20.0
MIN_SPACING = 2 * LABEL_SECONDS * MAX_SPEED
EDGE_MARGIN = LABEL_SECONDS * MAX_SPEED

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed: int) -> None:
        self.state = int(seed) & _MASK64
        self.counter = 0

    def next_u64(self, count: int) -> np.ndarray:
        k = np.arange(self.counter + 1, self.counter + count + 1, dtype=np.uint64)
        self.counter += count
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + k * _GAMMA
            z = (z ^ (z >> np.uint64(30))) * _M1
            z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))

    def uniform(self, count: int) -> np.ndarray:
        return ((self.next_u64(count) >> np.uint64(11)).astype(np.float64) + 0.5) / 2.0**53

    def normal(self, count: int) -> np.ndarray:
        u = self.uniform(2 * count).reshape(count, 2)
        return np.sqrt(-2.0 * np.log(u[:, 0])) * np.cos(2.0 * math.pi * u[:, 1])


@dataclass(frozen=True)
class Pothole:
    pos_m: float
    depth_m: float
    len_m: float


@dataclass(frozen=True)
class RoadProfile:
    length: float
    potholes: tuple[Pothole, ...] = ()
    noise_sigma: float = 0.3

    def __post_init__(self) -> None:
        object.__setattr__(self, "potholes", tuple(sorted(self.potholes, key=lambda p: p.pos_m)))
        if not self.length > 0:
            raise ValueError("road length must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        for p in self.potholes:
            if not 0 <= p.pos_m <= self.length:
                raise ValueError(f"pothole at {p.pos_m} m lies outside [0, {self.length}]")
            if not (p.depth_m > 0 and p.len_m > 0):
                raise ValueError("pothole depth and length must be positive")
        for a, b in zip(self.potholes, self.potholes[1:]):
            if a.pos_m + a.len_m > b.pos_m:
                raise ValueError(f"potholes at {a.pos_m} m and {b.pos_m} m overlap")

    def to_json(self) -> str:
        return json.dumps(
            {
                "length_m": self.length,
                "noise_sigma": self.noise_sigma,
                "potholes": [
                    {"pos_m": p.pos_m, "depth_m": p.depth_m, "len_m": p.len_m} for p in self.potholes
                ],
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> RoadProfile:
        raw = json.loads(text)
        try:
            holes = tuple(Pothole(float(p["pos_m"]), float(p["depth_m"]), float(p["len_m"])) for p in raw["potholes"])
            return cls(float(raw["length_m"]), holes, float(raw.get("noise_sigma", 0.3)))
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed profile JSON: missing or bad field {exc}") from None


@dataclass(frozen=True)
class SimConfig:
    speed: float = 10.0
    rate: float = 50.0
    seed: int = 0
    gravity: float = GRAVITY

    def __post_init__(self) -> None:
        if not (self.speed > 0 and self.rate > 0):
            raise ValueError("speed and rate must be positive")


def default_profile(n_potholes: int, length: float = 2000.0, seed: int = 0, noise_sigma: float = 0.3) -> RoadProfile:
    """Place potholes uniformly at random, at least 40 m apart and 20 m from either end."""
    if n_potholes < 0:
        raise ValueError("pothole count must be >= 0")
    if n_potholes == 0:
        return RoadProfile(length, (), noise_sigma)
    free = length - 2 * EDGE_MARGIN - (n_potholes - 1) * MIN_SPACING
    if free < 0:
        raise ValueError(
            f"{n_potholes} potholes need at least "
            f"{2 * EDGE_MARGIN + (n_potholes - 1) * MIN_SPACING:.0f} m of road, got {length:g} m"
        )
    rng = SplitMix64(seed)
    u = np.sort(rng.uniform(n_potholes))
    pos = EDGE_MARGIN + u * free + np.arange(n_potholes) * MIN_SPACING
    depth = 0.03 + 0.09 * rng.uniform(n_potholes)
    plen = 0.3 + 0.7 * rng.uniform(n_potholes)
    holes = tuple(Pothole(float(p), float(d), float(l)) for p, d, l in zip(pos, depth, plen))
    return RoadProfile(length, holes, noise_sigma)


def simulate(profile: RoadProfile, cfg: SimConfig = SimConfig()) -> SampleStream:
    n = int(math.floor(profile.length / cfg.speed * cfg.rate + 1e-9))
    t = np.arange(n) / cfg.rate
    g = cfg.gravity

    for p in profile.potholes:
        if 2 * p.len_m / cfg.speed * cfg.rate < 2:
            raise ValueError(
                f"pothole at {p.pos_m:g} m gives a pulse shorter than 2 samples; "
                "raise the sample rate or lower the speed"
            )

    noise = SplitMix64(cfg.seed).normal(3 * n).reshape(n, 3) * profile.noise_sigma
    acc = noise * np.array([0.5, 0.5, 1.0])
    acc[:, 2] += g
    gyro = np.zeros((n, 3))
    flag = np.zeros(n, dtype=bool)

    for p in profile.potholes:
        t0 = p.pos_m / cfg.speed
        d = p.len_m / cfg.speed
        amp = min(2 * g, g * p.depth_m / 0.05)
        pitch = p.depth_m / 0.05
        dip = (t >= t0) & (t < t0 + d)
        reb = (t >= t0 + d) & (t < t0 + 2 * d)
        s_dip = np.sin(math.pi * (t[dip] - t0) / d)
        s_reb = np.sin(math.pi * (t[reb] - t0 - d) / d)
        acc[dip, 2] -= amp * s_dip
        acc[reb, 2] += 0.5 * amp * s_reb
        gyro[dip, 0] += pitch * s_dip
        gyro[reb, 0] -= pitch * s_reb
        flag |= (t >= t0) & (t < t0 + LABEL_SECONDS)

    return SampleStream(t, acc, gyro, flag, cfg.rate)


def meters_to_latlon(distance_m, origin: tuple[float, float] = (0.0, 0.0)):
    """Position along a straight due-north segment starting at ``origin``."""
    lat = origin[0] + np.asarray(distance_m, dtype=float) / METERS_PER_DEG
    return lat, np.full_like(lat, origin[1])


def synthetic_track(stream: SampleStream, speed: float, origin: tuple[float, float] = (0.0, 0.0)) -> np.ndarray:
    """``(n, 3)`` array of ``t, lat, lon`` for a vehicle at constant speed."""
    lat, lon = meters_to_latlon(speed * stream.t, origin)
    return np.column_stack([stream.t, lat, lon])
