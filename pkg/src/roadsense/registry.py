"""Pothole registry: an append-only JSON-lines store with duplicate suppression.

Each line is one full :class:`PotholeRecord`; when an id appears more than
once the last line wins. A merge therefore appends a superseding line rather
than rewriting the file. A torn final line (crash mid-write) is ignored on
load and trimmed before the next append.
"""
from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import asdict, dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable

log = logging.getLogger(__name__)

EARTH_RADIUS_M = 6_371_000.0
DEFAULT_RADIUS_M = 15.0
DEFAULT_GEOM_TOL = 0.25
AREA_UNITS = ("frame", "m2")
SEVERITIES = ("low", "medium", "high")


class RegistryError(RuntimeError):
    pass


def _check_coords(lat: float, lon: float) -> None:
    if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
        raise ValueError(f"coordinates out of range: ({lat}, {lon})")


def haversine(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Great-circle distance in meters between two (lat, lon) points in degrees."""
    _check_coords(*a)
    _check_coords(*b)
    lat1, lon1, lat2, lon2 = map(math.radians, (a[0], a[1], b[0], b[1]))
    h = math.sin((lat2 - lat1) / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def _as_utc(ts: datetime | str) -> datetime:
    if isinstance(ts, str):
        ts = datetime.fromisoformat(ts)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts


@dataclass(frozen=True)
class PotholeRecord:
    lat: float
    lon: float
    area: float | None = None
    area_unit: str = "frame"
    length_m: float | None = None
    width_m: float | None = None
    severity: str = "low"
    image_ref: str | None = None
    first_seen: datetime = datetime(1970, 1, 1, tzinfo=timezone.utc)
    last_seen: datetime | None = None
    sightings: int = 1
    id: str = ""

    def __post_init__(self) -> None:
        _check_coords(self.lat, self.lon)
        if self.area_unit not in AREA_UNITS:
            raise ValueError(f"area_unit must be one of {AREA_UNITS}")
        if self.area is not None and self.area < 0:
            raise ValueError("area must be non-negative")
        if self.severity not in SEVERITIES:
            raise ValueError(f"severity must be one of {SEVERITIES}")
        if self.sightings < 1:
            raise ValueError("sightings must be >= 1")
        first = _as_utc(self.first_seen)
        last = first if self.last_seen is None else _as_utc(self.last_seen)
        if first > last:
            raise ValueError("first_seen is later than last_seen")
        object.__setattr__(self, "first_seen", first)
        object.__setattr__(self, "last_seen", last)

    @property
    def position(self) -> tuple[float, float]:
        return self.lat, self.lon

    def to_json(self) -> str:
        d = asdict(self)
        d["first_seen"] = self.first_seen.isoformat()
        d["last_seen"] = self.last_seen.isoformat()
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> PotholeRecord:
        return cls(**d)


def _rel_diff(a: float, b: float) -> float:
    top = max(abs(a), abs(b))
    return 0.0 if top == 0 else abs(a - b) / top


@dataclass(frozen=True)
class DuplicateCheck:
    match_id: str | None
    incomparable: bool = False

    def __bool__(self) -> bool:
        return self.match_id is not None


def geometry_matches(a: PotholeRecord, b: PotholeRecord, geom_tol: float) -> bool | None:
    """Area comparison when units agree, else length and width; None if nothing is comparable."""
    if a.area is not None and b.area is not None and a.area_unit == b.area_unit:
        return _rel_diff(a.area, b.area) <= geom_tol
    if None not in (a.length_m, a.width_m, b.length_m, b.width_m):
        return _rel_diff(a.length_m, b.length_m) <= geom_tol and _rel_diff(a.width_m, b.width_m) <= geom_tol
    return None


def is_duplicate(
    candidate: PotholeRecord,
    store: Iterable[PotholeRecord],
    radius_m: float = DEFAULT_RADIUS_M,
    geom_tol: float = DEFAULT_GEOM_TOL,
) -> DuplicateCheck:
    """Nearest stored record within ``radius_m`` whose geometry differs by at most ``geom_tol``."""
    if radius_m <= 0:
        raise ValueError("radius_m must be positive")
    if not 0 < geom_tol < 1:
        raise ValueError("geom_tol must be in (0, 1)")
    incomparable = False
    for _dist, rec in _within(store, candidate.lat, candidate.lon, radius_m):
        verdict = geometry_matches(candidate, rec, geom_tol)
        if verdict is None:
            incomparable = True
        elif verdict:
            return DuplicateCheck(rec.id)
    return DuplicateCheck(None, incomparable)


def _within(records: Iterable[PotholeRecord], lat: float, lon: float, radius_m: float):
    _check_coords(lat, lon)
    hits = []
    for rec in records:
        d = haversine((lat, lon), rec.position)
        if d <= radius_m:
            hits.append((d, rec))
    hits.sort(key=lambda pair: (pair[0], pair[1].id))
    return hits


def query_nearby(
    store: Iterable[PotholeRecord], lat: float, lon: float, radius_m: float
) -> list[PotholeRecord]:
    return [rec for _d, rec in _within(store, lat, lon, radius_m)]


def merge(existing: PotholeRecord, new: PotholeRecord) -> PotholeRecord:
    """One more sighting; the geometry of the larger-area report is kept."""
    larger = new if (new.area or 0.0) > (existing.area or 0.0) else existing
    return replace(
        existing,
        area=larger.area,
        area_unit=larger.area_unit,
        length_m=larger.length_m,
        width_m=larger.width_m,
        severity=larger.severity,
        image_ref=larger.image_ref if larger.image_ref is not None else existing.image_ref,
        first_seen=min(existing.first_seen, new.first_seen),
        last_seen=max(existing.last_seen, new.last_seen),
        sightings=existing.sightings + new.sightings,
    )


@dataclass(frozen=True)
class UpsertResult:
    created: bool
    id: str


class PotholeStore:
    """Single-writer registry backed by a JSON-lines file (or memory if ``path`` is None)."""

    def __init__(self, path: str | Path | None = None) -> None:
        self.path = Path(path) if path is not None else None
        self._records: dict[str, PotholeRecord] = {}
        self._next = 1
        self._torn_tail = False
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self) -> None:
        data = self.path.read_bytes()
        lines = data.split(b"\n")
        tail = lines.pop()  # bytes after the final newline
        if tail.strip():
            log.warning("%s: ignoring incomplete final line", self.path)
            self._torn_tail = True
        for n, raw in enumerate(lines, start=1):
            if not raw.strip():
                continue
            try:
                rec = PotholeRecord.from_dict(json.loads(raw))
            except (ValueError, TypeError) as exc:
                raise RegistryError(f"{self.path}:{n}: bad record: {exc}") from None
            self._records[rec.id] = rec
            self._bump(rec.id)

    def _bump(self, rec_id: str) -> None:
        if rec_id.startswith("ph-") and rec_id[3:].isdigit():
            self._next = max(self._next, int(rec_id[3:]) + 1)

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self):
        return iter(sorted(self._records.values(), key=lambda r: r.id))

    def get(self, rec_id: str) -> PotholeRecord:
        return self._records[rec_id]

    def records(self) -> list[PotholeRecord]:
        return list(self)

    def _append(self, rec: PotholeRecord) -> None:
        if self.path is None:
            return
        line = (rec.to_json() + "\n").encode("utf-8")
        try:
            if self._torn_tail:
                data = self.path.read_bytes()
                cut = data.rfind(b"\n") + 1
                with open(self.path, "r+b") as fh:
                    fh.truncate(cut)
                self._torn_tail = False
            with open(self.path, "ab") as fh:
                fh.write(line)
                fh.flush()
                os.fsync(fh.fileno())
        except OSError as exc:
            self._torn_tail = True
            raise RegistryError(f"could not write {self.path}: {exc}") from exc

    def upsert(
        self,
        record: PotholeRecord,
        radius_m: float = DEFAULT_RADIUS_M,
        geom_tol: float = DEFAULT_GEOM_TOL,
    ) -> UpsertResult:
        check = is_duplicate(record, self._records.values(), radius_m, geom_tol)
        if check:
            updated = merge(self._records[check.match_id], record)
            self._append(updated)
            self._records[updated.id] = updated
            return UpsertResult(False, updated.id)
        new = replace(record, id=f"ph-{self._next:06d}")
        self._append(new)
        self._records[new.id] = new
        self._next += 1
        return UpsertResult(True, new.id)

    def nearby(self, lat: float, lon: float, radius_m: float) -> list[PotholeRecord]:
        return query_nearby(self._records.values(), lat, lon, radius_m)


def to_geojson(records: Iterable[PotholeRecord]) -> dict:
    features = []
    for rec in records:
        props = json.loads(rec.to_json())
        props.pop("lat")
        props.pop("lon")
        features.append(
            {"type": "Feature", "geometry": {"type": "Point", "coordinates": [rec.lon, rec.lat]}, "properties": props}
        )
    return {"type": "FeatureCollection", "features": features}


def render_table(records: Iterable[PotholeRecord]) -> str:
    header = ("id", "lat", "lon", "area", "unit", "severity", "sightings", "last_seen")
    rows = [header]
    for r in records:
        rows.append((
            r.id,
            f"{r.lat:.6f}",
            f"{r.lon:.6f}",
            "" if r.area is None else f"{r.area:.4f}",
            r.area_unit,
            r.severity,
            str(r.sightings),
            r.last_seen.isoformat(),
        ))
    widths = [max(len(row[k]) for row in rows) for k in range(len(header))]
    return "\n".join("  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip() for row in rows) + "\n"
