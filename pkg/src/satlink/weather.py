"""Hourly gridded weather on a 0.1 degree grid.

Two interchangeable providers sit behind the same ``cell_at`` interface:

* :class:`WeatherField` — an explicit, bounded set of cells, loadable from
  and savable to CSV.  Lookups resolve to the nearest hour, then the
  nearest cell center by great-circle distance.
* :class:`SyntheticWeather` — an unbounded deterministic generator (smooth
  background fields plus moving storm cells) that evaluates any grid cell
  on demand.  Used both to drive link simulation and to materialize
  :class:`WeatherField` instances of any requested extent.

Cell values are always rounded to 6 decimal places so that a field survives
a CSV round trip bit-exactly and an on-demand provider agrees with its own
materialized export.

Fields and storm tracks do not wrap across the antimeridian; coverage
boxes must stay inside a single [-180, 180) window.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Iterable, Protocol

import numpy as np

from .geometry import EARTH_RADIUS_M, GeoPosition, normalize_lon

GRID_DEG = 0.1
_HOUR_S = 3600


class CoverageGapError(LookupError):
    """A query fell outside a weather field's coverage by more than one
    hour in time or one grid cell in space."""


class WeatherCsvError(ValueError):
    """A weather CSV failed to parse; ``errors`` lists (line, message)."""

    def __init__(self, path: str, errors: list[tuple[int, str]]):
        self.path = path
        self.errors = errors
        detail = "; ".join(f"line {ln}: {msg}" for ln, msg in errors[:10])
        more = "" if len(errors) <= 10 else f" (+{len(errors) - 10} more)"
        super().__init__(f"{path}: {detail}{more}")


def _snap_decideg(value_deg: float) -> int:
    # Nearest multiple of 0.1 degrees; exact midpoints round toward the
    # smaller coordinate, matching the lexicographic tie rule of lookups.
    return int(math.ceil(value_deg * 10.0 - 0.5))


def _snap_hour(t: datetime) -> int:
    ts = t.timestamp()
    return int(math.ceil(ts / _HOUR_S - 0.5))


def _require_utc(t: datetime) -> datetime:
    if t.tzinfo is None:
        raise ValueError(f"timestamp must be timezone-aware: {t!r}")
    return t.astimezone(timezone.utc)


def _hour_to_datetime(hour_idx: int) -> datetime:
    return datetime.fromtimestamp(hour_idx * _HOUR_S, tz=timezone.utc)


@dataclass(frozen=True)
class WeatherCell:
    """One hourly observation at a 0.1 degree grid cell center."""

    hour_utc: datetime
    grid_lat_deg: float
    grid_lon_deg: float
    precipitation_mmh: float
    cloud_cover_pct: float
    temperature_c: float
    wind_speed_mps: float

    def __post_init__(self) -> None:
        t = _require_utc(self.hour_utc)
        if t.minute or t.second or t.microsecond:
            raise ValueError(f"hour_utc must be truncated to the hour: {t.isoformat()}")
        object.__setattr__(self, "hour_utc", t)
        object.__setattr__(self, "grid_lon_deg", normalize_lon(self.grid_lon_deg))
        for name in ("grid_lat_deg", "grid_lon_deg"):
            v = getattr(self, name)
            if abs(v * 10.0 - round(v * 10.0)) > 1e-6:
                raise ValueError(f"{name} not on the 0.1 degree grid: {v}")
            object.__setattr__(self, name, round(v * 10.0) / 10.0)
        if not -90.0 <= self.grid_lat_deg <= 90.0:
            raise ValueError(f"grid latitude out of range: {self.grid_lat_deg}")
        if self.precipitation_mmh < 0.0:
            raise ValueError(f"precipitation must be >= 0: {self.precipitation_mmh}")
        if not 0.0 <= self.cloud_cover_pct <= 100.0:
            raise ValueError(f"cloud cover out of [0, 100]: {self.cloud_cover_pct}")
        if self.wind_speed_mps < 0.0:
            raise ValueError(f"wind speed must be >= 0: {self.wind_speed_mps}")

    @property
    def key(self) -> tuple[int, int, int]:
        """(epoch hour, lat decidegrees, lon decidegrees) identity."""
        return (
            int(self.hour_utc.timestamp()) // _HOUR_S,
            round(self.grid_lat_deg * 10.0),
            round(self.grid_lon_deg * 10.0),
        )


class WeatherProvider(Protocol):
    """Anything that can answer: nearest weather cell for (time, position)."""

    def cell_at(self, t: datetime, p: GeoPosition) -> WeatherCell: ...


def _haversine_vec(p: GeoPosition, lats_deg: np.ndarray, lons_deg: np.ndarray) -> np.ndarray:
    lat1 = math.radians(p.latitude_deg)
    lat2 = np.radians(lats_deg)
    dlat = lat2 - lat1
    dlon = np.radians(lons_deg - p.longitude_deg)
    h = np.sin(dlat / 2.0) ** 2 + math.cos(lat1) * np.cos(lat2) * np.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.minimum(1.0, np.sqrt(h)))


class WeatherField:
    """An immutable set of weather cells with nearest-cell lookup.

    Cells are keyed by (hour, grid latitude, grid longitude); constructing
    a field with two cells at the same key is rejected.  Lookups are safe
    to run concurrently once the field is built.
    """

    def __init__(self, cells: Iterable[WeatherCell]):
        self._cells: dict[tuple[int, int, int], WeatherCell] = {}
        for cell in cells:
            key = cell.key
            if key in self._cells:
                raise ValueError(f"duplicate weather cell key {key}")
            self._cells[key] = cell
        self._hours = np.array(sorted({k[0] for k in self._cells}), dtype=np.int64)
        self._by_hour: dict[int, tuple[np.ndarray, np.ndarray, list[WeatherCell]]] = {}
        for hour in self._hours.tolist():
            group = sorted(
                (c for c in self._cells.values() if c.key[0] == hour),
                key=lambda c: (c.grid_lat_deg, c.grid_lon_deg),
            )
            lats = np.array([c.grid_lat_deg for c in group])
            lons = np.array([c.grid_lon_deg for c in group])
            self._by_hour[hour] = (lats, lons, group)
        if self._cells:
            all_lats = [c.grid_lat_deg for c in self._cells.values()]
            all_lons = [c.grid_lon_deg for c in self._cells.values()]
            self.lat_bounds = (min(all_lats), max(all_lats))
            self.lon_bounds = (min(all_lons), max(all_lons))
            self.hour_bounds = (
                _hour_to_datetime(int(self._hours[0])),
                _hour_to_datetime(int(self._hours[-1])),
            )
        else:
            self.lat_bounds = self.lon_bounds = self.hour_bounds = None

    def __len__(self) -> int:
        return len(self._cells)

    def __iter__(self):
        return iter(sorted(self._cells.values(), key=lambda c: c.key))

    def lookup_nearest(self, t: datetime, p: GeoPosition) -> WeatherCell:
        """Cell at the nearest hour (ties to the earlier hour), then the
        nearest center by great-circle distance (ties to the smaller
        (lat, lon)).

        Raises :class:`CoverageGapError` when ``t`` is more than one hour
        outside the field's hour span or ``p`` more than one grid cell
        outside its spatial bounding box.
        """
        if not self._cells:
            raise ValueError("weather field is empty")
        ts = _require_utc(t).timestamp()
        dt = np.abs(ts - self._hours * _HOUR_S)
        # Hours are sorted ascending, so the first minimum is the earlier one.
        i = int(np.argmin(dt))
        if dt[i] > _HOUR_S:
            raise CoverageGapError(
                f"timestamp {t.isoformat()} is {dt[i] / _HOUR_S:.2f} h from the "
                f"nearest weather hour"
            )
        margin = GRID_DEG / 2.0 + GRID_DEG
        if not (self.lat_bounds[0] - margin <= p.latitude_deg <= self.lat_bounds[1] + margin):
            raise CoverageGapError(f"latitude {p.latitude_deg} outside weather coverage")
        if not (self.lon_bounds[0] - margin <= p.longitude_deg <= self.lon_bounds[1] + margin):
            raise CoverageGapError(f"longitude {p.longitude_deg} outside weather coverage")
        lats, lons, group = self._by_hour[int(self._hours[i])]
        d = _haversine_vec(p, lats, lons)
        # Groups are pre-sorted by (lat, lon); argmin keeps the first of ties.
        return group[int(np.argmin(d))]

    # Provider interface.
    cell_at = lookup_nearest


class SyntheticWeather:
    """Deterministic analytic weather: smooth background plus moving storms.

    Storm tracks are seeded per (10 degree tile, UTC day), so any grid cell
    at any hour can be evaluated independently; two providers built from
    the same (storm_density, seed) agree everywhere.  ``storm_density`` is
    the expected number of storm tracks spawned per tile per day.
    """

    def __init__(self, storm_density: float, seed: int):
        if storm_density < 0.0:
            raise ValueError(f"storm_density must be >= 0: {storm_density}")
        if seed < 0:
            raise ValueError(f"seed must be >= 0: {seed}")
        self.storm_density = storm_density
        self.seed = seed
        self._storm_cache: dict[tuple[int, int, int], list[tuple]] = {}

    def _storms(self, tile_lat: int, tile_lon: int, day: int) -> list[tuple]:
        key = (tile_lat, tile_lon, day)
        cached = self._storm_cache.get(key)
        if cached is not None:
            return cached
        if self.storm_density == 0.0 or day < 0:
            self._storm_cache[key] = []
            return []
        rng = np.random.default_rng(
            np.random.SeedSequence((self.seed, 0x57, tile_lat + 90, tile_lon + 180, day))
        )
        storms = []
        for _ in range(int(rng.poisson(self.storm_density))):
            lat0 = tile_lat * 10.0 + 10.0 * rng.random()
            lon0 = tile_lon * 10.0 + 10.0 * rng.random()
            birth_h = day * 24.0 + 24.0 * rng.random()
            life_h = 3.0 + 7.0 * rng.random()
            vlat = rng.uniform(-0.25, 0.25)
            vlon = rng.uniform(-0.25, 0.25)
            radius = 0.3 + 0.9 * rng.random()
            peak = 4.0 + 16.0 * rng.random()
            storms.append((lat0, lon0, birth_h, life_h, vlat, vlon, radius, peak))
        self._storm_cache[key] = storms
        return storms

    def _storm_precip(self, hour_idx: int, lat: float, lon: float) -> float:
        if self.storm_density == 0.0:
            return 0.0
        day = hour_idx // 24
        tlat, tlon = math.floor(lat / 10.0), math.floor(lon / 10.0)
        cos_lat = math.cos(math.radians(lat))
        total = 0.0
        for d in (day - 1, day):
            for ty in (tlat - 1, tlat, tlat + 1):
                for tx in (tlon - 1, tlon, tlon + 1):
                    for (lat0, lon0, birth, life, vlat, vlon, radius, peak) in self._storms(ty, tx, d):
                        age = hour_idx - birth
                        if not 0.0 <= age < life:
                            continue
                        dlat = lat - (lat0 + vlat * age)
                        dlon = (lon - (lon0 + vlon * age)) * cos_lat
                        d2 = dlat * dlat + dlon * dlon
                        if d2 < (3.0 * radius) ** 2:
                            total += peak * math.exp(-d2 / (2.0 * radius * radius))
        return total

    def _values(self, hour_idx: int, lat: float, lon: float) -> tuple[float, float, float, float]:
        hod = hour_idx % 24
        temp = (
            24.0
            - 0.5 * abs(lat)
            + 6.0 * math.sin(2.0 * math.pi * (hod - 9.0) / 24.0)
            + 2.0 * math.sin(0.37 * lat + 0.23 * lon)
        )
        wind = max(
            0.0,
            5.0 + 3.0 * math.sin(0.21 * lat + 0.17 * lon + 0.13 * hour_idx) + 2.0 * math.sin(0.05 * hour_idx),
        )
        precip = self._storm_precip(hour_idx, lat, lon)
        cloud = min(100.0, max(0.0, 42.0 + 30.0 * math.sin(0.11 * lat - 0.19 * lon + 0.07 * hour_idx) + 6.0 * precip))
        return (round(precip, 6), round(cloud, 6), round(temp, 6), round(wind, 6))

    def cell_at(self, t: datetime, p: GeoPosition) -> WeatherCell:
        hour_idx = _snap_hour(_require_utc(t))
        ilat = _snap_decideg(p.latitude_deg)
        ilon = _snap_decideg(normalize_lon(p.longitude_deg))
        lat, lon = ilat / 10.0, ilon / 10.0
        precip, cloud, temp, wind = self._values(hour_idx, lat, lon)
        return WeatherCell(
            hour_utc=_hour_to_datetime(hour_idx),
            grid_lat_deg=lat,
            grid_lon_deg=lon,
            precipitation_mmh=precip,
            cloud_cover_pct=cloud,
            temperature_c=temp,
            wind_speed_mps=wind,
        )


def synth_weather_field(
    bounds: tuple[float, float, float, float],
    time_span: tuple[datetime, datetime],
    storm_density: float,
    seed: int,
) -> WeatherField:
    """Materialize a :class:`SyntheticWeather` over a lat/lon box and span.

    ``bounds`` is (lat_min, lat_max, lon_min, lon_max); cell centers are the
    0.1 degree grid points in the half-open box.  ``time_span`` is a
    half-open (start, end) interval sampled at every whole UTC hour.
    """
    lat_min, lat_max, lon_min, lon_max = bounds
    if lat_max <= lat_min or lon_max <= lon_min:
        raise ValueError(f"empty bounds: {bounds}")
    start, end = _require_utc(time_span[0]), _require_utc(time_span[1])
    first_hour = math.ceil(start.timestamp() / _HOUR_S)
    last_hour = math.ceil(end.timestamp() / _HOUR_S) - 1
    if last_hour < first_hour:
        raise ValueError(f"time span contains no whole hour: {time_span}")

    provider = SyntheticWeather(storm_density, seed)
    ilat_lo = math.ceil(lat_min * 10.0 - 1e-9)
    ilat_hi = math.ceil(lat_max * 10.0 - 1e-9) - 1
    ilon_lo = math.ceil(lon_min * 10.0 - 1e-9)
    ilon_hi = math.ceil(lon_max * 10.0 - 1e-9) - 1
    cells = []
    for hour_idx in range(first_hour, last_hour + 1):
        when = _hour_to_datetime(hour_idx)
        for ilat in range(ilat_lo, ilat_hi + 1):
            for ilon in range(ilon_lo, ilon_hi + 1):
                lat, lon = ilat / 10.0, ilon / 10.0
                precip, cloud, temp, wind = provider._values(hour_idx, lat, lon)
                cells.append(
                    WeatherCell(when, lat, lon, precip, cloud, temp, wind)
                )
    return WeatherField(cells)


WEATHER_CSV_COLUMNS = [
    "hour_utc",
    "grid_lat",
    "grid_lon",
    "precip_mmh",
    "cloud_pct",
    "temp_c",
    "wind_mps",
]

_TIME_FMT = "%Y-%m-%dT%H:%M:%SZ"


def _parse_utc(text: str) -> datetime:
    return datetime.fromisoformat(text.replace("Z", "+00:00")).astimezone(timezone.utc)


def save_weather_csv(field: WeatherField, path: str) -> None:
    """Write a field in key order with fixed decimal formatting."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(WEATHER_CSV_COLUMNS)
        for cell in field:
            writer.writerow(
                [
                    cell.hour_utc.strftime(_TIME_FMT),
                    f"{cell.grid_lat_deg:.1f}",
                    f"{cell.grid_lon_deg:.1f}",
                    f"{cell.precipitation_mmh:.6f}",
                    f"{cell.cloud_cover_pct:.6f}",
                    f"{cell.temperature_c:.6f}",
                    f"{cell.wind_speed_mps:.6f}",
                ]
            )


def load_weather_csv(path: str) -> WeatherField:
    """Parse a weather CSV, reporting every malformed line at once."""
    errors: list[tuple[int, str]] = []
    cells: list[WeatherCell] = []
    first_line_for_key: dict[tuple[int, int, int], int] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != WEATHER_CSV_COLUMNS:
            raise WeatherCsvError(path, [(1, f"bad header {header!r}")])
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(WEATHER_CSV_COLUMNS):
                errors.append((line_no, f"expected {len(WEATHER_CSV_COLUMNS)} fields, got {len(row)}"))
                continue
            try:
                cell = WeatherCell(
                    hour_utc=_parse_utc(row[0]),
                    grid_lat_deg=float(row[1]),
                    grid_lon_deg=float(row[2]),
                    precipitation_mmh=float(row[3]),
                    cloud_cover_pct=float(row[4]),
                    temperature_c=float(row[5]),
                    wind_speed_mps=float(row[6]),
                )
            except ValueError as exc:
                errors.append((line_no, str(exc)))
                continue
            first = first_line_for_key.get(cell.key)
            if first is not None:
                errors.append((line_no, f"duplicate cell key {cell.key}: lines {first} and {line_no}"))
                continue
            first_line_for_key[cell.key] = line_no
            cells.append(cell)
    if errors:
        raise WeatherCsvError(path, errors)
    return WeatherField(cells)
