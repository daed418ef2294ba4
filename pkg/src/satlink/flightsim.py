"""Synthetic flight-log generation with a physically grounded CNR signal.

A flight follows the great circle between two airports at constant ground
speed with a trapezoid altitude profile.  Each minute the aircraft logs its
position and the downlink CNR toward the highest-elevation satellite in
view: an elevation roll-off from a zenith level, rain attenuation while the
aircraft is inside the troposphere, and Gaussian measurement noise, clamped
to the 0-20 dB range of the receiver.  Everything is a pure function of
(config, seed), so regenerating a dataset reproduces it byte for byte.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, replace
from datetime import datetime, timedelta, timezone
from typing import Optional, Sequence

import numpy as np

from .geometry import (
    AntipodalRouteError,
    GeoPosition,
    GeoSatellite,
    elevations_deg,
    geo_look_angles,
    haversine_m,
    slerp_track,
)
from .ingest import CnrCategory, FlightLogRecord, bin_cnr, save_logs
from .weather import SyntheticWeather, WeatherCell, WeatherProvider

__all__ = [
    "AntipodalRouteError",
    "RouteSpec",
    "LinkModelParams",
    "DEFAULT_LINK_PARAMS",
    "CNR_MIN_DB",
    "CNR_MAX_DB",
    "great_circle_path",
    "synth_cnr",
    "generate_flight",
    "GenerationConfig",
    "RoutePlan",
    "WeatherSpec",
    "ConfigError",
    "generate_dataset",
    "sample_cnr_population",
    "demo_satellites",
    "demo_route_plans",
    "demo_config",
]

CNR_MIN_DB = 0.0
CNR_MAX_DB = 20.0


@dataclass(frozen=True)
class RouteSpec:
    """A scheduled city pair flown at a fixed cruise altitude and speed."""

    departure_airport: str
    arrival_airport: str
    departure_pos: GeoPosition
    arrival_pos: GeoPosition
    cruise_altitude_m: float
    ground_speed_mps: float
    airline_code: str
    tail_number: str

    def __post_init__(self) -> None:
        if not 8000.0 <= self.cruise_altitude_m <= 13000.0:
            raise ValueError(f"cruise altitude out of [8000, 13000] m: {self.cruise_altitude_m}")
        if not self.ground_speed_mps > 0.0:
            raise ValueError(f"ground speed must be > 0: {self.ground_speed_mps}")
        if max(self.departure_pos.altitude_m, self.arrival_pos.altitude_m) >= self.cruise_altitude_m:
            raise ValueError("airport elevation at or above cruise altitude")


@dataclass(frozen=True)
class LinkModelParams:
    """Knobs of the additive-dB downlink model.

    ``elevation_rolloff_db`` scales the (1 - sin(elevation)) loss term;
    rain attenuation applies only below ``troposphere_ceiling_m``; CNR is
    reported missing below ``horizon_cut_elevation_deg``.
    """

    cnr_at_zenith_db: float
    elevation_rolloff_db: float
    rain_atten_db_per_mmh: float
    troposphere_ceiling_m: float
    noise_sigma_db: float
    horizon_cut_elevation_deg: float

    def __post_init__(self) -> None:
        for name in ("cnr_at_zenith_db", "elevation_rolloff_db", "rain_atten_db_per_mmh"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.noise_sigma_db < 0.0:
            raise ValueError(f"noise_sigma_db must be >= 0: {self.noise_sigma_db}")
        if not 0.0 < self.horizon_cut_elevation_deg < 90.0:
            raise ValueError(
                f"horizon_cut_elevation_deg must be in (0, 90): {self.horizon_cut_elevation_deg}"
            )


#: Frozen defaults, calibrated so that the demo-route CNR population has a
#: mean of ~8.8 dB with most mass between 8 and 10 dB.
DEFAULT_LINK_PARAMS = LinkModelParams(
    cnr_at_zenith_db=10.15,
    elevation_rolloff_db=3.2,
    rain_atten_db_per_mmh=0.5,
    troposphere_ceiling_m=6000.0,
    noise_sigma_db=0.18,
    horizon_cut_elevation_deg=5.0,
)

DEFAULT_CLIMB_RATE_MPS = 10.0
DEFAULT_DESCENT_RATE_MPS = 8.0
DEFAULT_MIN_LOG_ALTITUDE_M = 1000.0


def great_circle_path(
    route: RouteSpec,
    step_s: float = 60.0,
    climb_rate_mps: float = DEFAULT_CLIMB_RATE_MPS,
    descent_rate_mps: float = DEFAULT_DESCENT_RATE_MPS,
) -> list[tuple[float, GeoPosition]]:
    """Sample the route every ``step_s`` seconds from takeoff to landing.

    The track is the spherical great circle between the endpoints, flown at
    uniform speed; the flight time is rounded up to a whole number of steps
    so the final sample lands exactly on the arrival point.  Altitude
    climbs linearly to cruise, holds, and descends linearly to the arrival
    elevation.

    Returns a list of (seconds since takeoff, position) pairs.  Raises
    ``ValueError`` for coincident endpoints and
    :class:`AntipodalRouteError` for antipodal ones.
    """
    if step_s <= 0.0:
        raise ValueError(f"step_s must be > 0: {step_s}")
    if climb_rate_mps <= 0.0 or descent_rate_mps <= 0.0:
        raise ValueError("climb and descent rates must be > 0")
    dep, arr = route.departure_pos, route.arrival_pos
    distance_m = haversine_m(dep, arr)
    duration_s = distance_m / route.ground_speed_mps
    n_steps = max(1, math.ceil(duration_s / step_s - 1e-9))
    fractions = np.arange(n_steps + 1, dtype=float) / n_steps
    lats, lons = slerp_track(dep, arr, fractions)

    total_s = n_steps * step_s
    times = np.arange(n_steps + 1, dtype=float) * step_s
    alts = np.minimum.reduce(
        [
            dep.altitude_m + climb_rate_mps * times,
            np.full_like(times, route.cruise_altitude_m),
            arr.altitude_m + descent_rate_mps * (total_s - times),
        ]
    )
    return [
        (float(t), GeoPosition(float(lat), float(lon), float(alt)))
        for t, lat, lon, alt in zip(times, lats, lons, alts)
    ]


def synth_cnr(
    p: GeoPosition,
    sat: GeoSatellite,
    wx: Optional[WeatherCell],
    params: LinkModelParams,
    rng: Optional[np.random.Generator] = None,
) -> Optional[float]:
    """Synthesize one CNR measurement in dB, or ``None`` below the horizon cut.

    cnr = zenith - rolloff * (1 - sin(elevation)) - rain - noise, where the
    rain term applies only below the troposphere ceiling and with weather
    present.  The result is clamped to [0, 20] dB.  ``rng`` may be omitted
    when ``noise_sigma_db`` is zero.
    """
    elevation = geo_look_angles(p, sat).elevation_deg
    if elevation < params.horizon_cut_elevation_deg:
        return None
    cnr = params.cnr_at_zenith_db - params.elevation_rolloff_db * (
        1.0 - math.sin(math.radians(elevation))
    )
    if wx is not None and p.altitude_m < params.troposphere_ceiling_m:
        cnr -= params.rain_atten_db_per_mmh * wx.precipitation_mmh
    if params.noise_sigma_db > 0.0:
        if rng is None:
            raise ValueError("rng required when noise_sigma_db > 0")
        cnr -= rng.normal(0.0, params.noise_sigma_db)
    return min(CNR_MAX_DB, max(CNR_MIN_DB, cnr))


def generate_flight(
    route: RouteSpec,
    sats: Sequence[GeoSatellite],
    weather: Optional[WeatherProvider],
    params: LinkModelParams,
    seed: int,
    departure_time: datetime,
    flight_id: Optional[str] = None,
    min_log_altitude_m: float = DEFAULT_MIN_LOG_ALTITUDE_M,
    climb_rate_mps: float = DEFAULT_CLIMB_RATE_MPS,
    descent_rate_mps: float = DEFAULT_DESCENT_RATE_MPS,
) -> list[FlightLogRecord]:
    """Simulate one flight and return its minute-resolution log.

    Logging starts once the climb first reaches ``min_log_altitude_m`` and
    runs through landing.  Each record's serving satellite is the one with
    the highest elevation at that position (ties resolved by satellite id).
    The same seed always reproduces the same records.
    """
    if not sats:
        raise ValueError("at least one satellite is required")
    ids = [s.satellite_id for s in sats]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate satellite ids: {ids}")
    departure_time = departure_time.astimezone(timezone.utc)
    if departure_time.second or departure_time.microsecond:
        raise ValueError("departure_time must be minute-aligned")

    sats = sorted(sats, key=lambda s: s.satellite_id)
    path = great_circle_path(route, 60.0, climb_rate_mps, descent_rate_mps)
    lats = np.array([p.latitude_deg for _, p in path])
    lons = np.array([p.longitude_deg for _, p in path])
    alts = np.array([p.altitude_m for _, p in path])
    elevation_by_sat = np.stack([elevations_deg(lats, lons, alts, s) for s in sats])
    serving_idx = np.argmax(elevation_by_sat, axis=0)

    above_gate = np.nonzero(alts >= min_log_altitude_m)[0]
    if above_gate.size == 0:
        return []
    first = int(above_gate[0])

    if flight_id is None:
        flight_id = (
            f"{route.departure_airport}{route.arrival_airport}-{departure_time:%Y%m%d%H%M}"
        )
    flight_start = departure_time
    flight_end = departure_time + timedelta(seconds=path[-1][0])
    rng = np.random.default_rng(seed)
    records = []
    for i in range(first, len(path)):
        t_offset, pos = path[i]
        sat = sats[int(serving_idx[i])]
        log_date = departure_time + timedelta(seconds=t_offset)
        cell = None
        if weather is not None and pos.altitude_m < params.troposphere_ceiling_m:
            cell = weather.cell_at(log_date, pos)
        cnr = synth_cnr(pos, sat, cell, params, rng)
        records.append(
            FlightLogRecord(
                log_date=log_date,
                flight_id=flight_id,
                tail_number=route.tail_number,
                airline_code=route.airline_code,
                departure_airport=route.departure_airport,
                arrival_airport=route.arrival_airport,
                flight_start_time=flight_start,
                flight_end_time=flight_end,
                latitude_deg=pos.latitude_deg,
                longitude_deg=pos.longitude_deg,
                altitude_m=pos.altitude_m,
                satellite_id=sat.satellite_id,
                cnr_db=cnr,
            )
        )
    return records


class ConfigError(ValueError):
    """A generation config failed validation; ``errors`` lists the problems."""

    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("; ".join(errors))


@dataclass(frozen=True)
class RoutePlan:
    """A route plus the airframes that rotate through it."""

    route: RouteSpec
    tail_numbers: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.tail_numbers:
            raise ValueError("at least one tail number per route")


@dataclass(frozen=True)
class WeatherSpec:
    """Synthetic-weather settings shared by generation and the later join."""

    storm_density: float
    seed: int


@dataclass(frozen=True)
class GenerationConfig:
    seed: int
    flights_per_route: int
    start_date: datetime
    span_days: float
    routes: tuple[RoutePlan, ...]
    satellites: tuple[GeoSatellite, ...]
    link_params: LinkModelParams = DEFAULT_LINK_PARAMS
    weather: Optional[WeatherSpec] = None
    climb_rate_mps: float = DEFAULT_CLIMB_RATE_MPS
    descent_rate_mps: float = DEFAULT_DESCENT_RATE_MPS
    min_log_altitude_m: float = DEFAULT_MIN_LOG_ALTITUDE_M

    @classmethod
    def from_dict(cls, data: dict) -> "GenerationConfig":
        errors: list[str] = []

        def need(key, kind):
            if key not in data:
                errors.append(f"missing key {key!r}")
                return None
            value = data[key]
            if kind is float and isinstance(value, int):
                value = float(value)
            if not isinstance(value, kind):
                errors.append(f"key {key!r} must be {kind.__name__}")
                return None
            return value

        seed = need("seed", int)
        flights = need("flights_per_route", int)
        start_raw = need("start_date", str)
        span_days = need("span_days", float)
        routes_raw = need("routes", list)
        sats_raw = need("satellites", list)

        start_date = None
        if start_raw is not None:
            try:
                start_date = datetime.fromisoformat(start_raw.replace("Z", "+00:00"))
                if start_date.tzinfo is None:
                    start_date = start_date.replace(tzinfo=timezone.utc)
            except ValueError:
                errors.append(f"start_date not ISO-8601: {start_raw!r}")

        plans: list[RoutePlan] = []
        for i, entry in enumerate(routes_raw or []):
            try:
                dep = entry["departure"]
                arr = entry["arrival"]
                tails = tuple(entry.get("tail_numbers") or [entry["tail_number"]])
                plans.append(
                    RoutePlan(
                        route=RouteSpec(
                            departure_airport=entry["departure_airport"],
                            arrival_airport=entry["arrival_airport"],
                            departure_pos=GeoPosition(dep[0], dep[1], dep[2]),
                            arrival_pos=GeoPosition(arr[0], arr[1], arr[2]),
                            cruise_altitude_m=float(entry["cruise_altitude_m"]),
                            ground_speed_mps=float(entry["ground_speed_mps"]),
                            airline_code=entry["airline_code"],
                            tail_number=tails[0],
                        ),
                        tail_numbers=tails,
                    )
                )
            except (KeyError, TypeError, ValueError, IndexError) as exc:
                errors.append(f"routes[{i}]: {exc}")

        satellites: list[GeoSatellite] = []
        for i, entry in enumerate(sats_raw or []):
            try:
                satellites.append(
                    GeoSatellite(entry["satellite_id"], float(entry["slot_longitude_deg"]))
                )
            except (KeyError, TypeError, ValueError) as exc:
                errors.append(f"satellites[{i}]: {exc}")

        link_params = DEFAULT_LINK_PARAMS
        if "link_params" in data:
            try:
                link_params = LinkModelParams(**data["link_params"])
            except (TypeError, ValueError) as exc:
                errors.append(f"link_params: {exc}")

        weather = None
        if data.get("weather") is not None:
            try:
                weather = WeatherSpec(
                    storm_density=float(data["weather"]["storm_density"]),
                    seed=int(data["weather"]["seed"]),
                )
            except (KeyError, TypeError, ValueError) as exc:
                errors.append(f"weather: {exc}")

        if flights is not None and flights < 0:
            errors.append("flights_per_route must be >= 0")
        if span_days is not None and span_days <= 0:
            errors.append("span_days must be > 0")
        if errors:
            raise ConfigError(errors)
        return cls(
            seed=seed,
            flights_per_route=flights,
            start_date=start_date,
            span_days=span_days,
            routes=tuple(plans),
            satellites=tuple(satellites),
            link_params=link_params,
            weather=weather,
            climb_rate_mps=float(data.get("climb_rate_mps", DEFAULT_CLIMB_RATE_MPS)),
            descent_rate_mps=float(data.get("descent_rate_mps", DEFAULT_DESCENT_RATE_MPS)),
            min_log_altitude_m=float(data.get("min_log_altitude_m", DEFAULT_MIN_LOG_ALTITUDE_M)),
        )

    @classmethod
    def from_json_file(cls, path: str) -> "GenerationConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def weather_provider(self) -> Optional[SyntheticWeather]:
        if self.weather is None:
            return None
        return SyntheticWeather(self.weather.storm_density, self.weather.seed)


def _flight_seed(master_seed: int, flight_index: int) -> int:
    return int(np.random.SeedSequence((master_seed, flight_index, 0)).generate_state(1, np.uint64)[0])


def generate_dataset(config: GenerationConfig, out_dir: str) -> dict:
    """Generate every configured flight, write the CSVs, return the manifest.

    Flight CSVs land under ``out_dir/flights/``; the manifest (also written
    to ``out_dir/manifest.json``) records per-flight row counts and the
    label distribution.  Output is a pure function of (config, seed).
    """
    flights_dir = os.path.join(out_dir, "flights")
    os.makedirs(flights_dir, exist_ok=True)
    provider = config.weather_provider()

    files = []
    total_rows = 0
    labeled_rows = 0
    category_counts = {c.label: 0 for c in CnrCategory}
    flight_index = 0
    span_minutes = max(1, round(config.span_days * 24 * 60))
    for plan in config.routes:
        for j in range(config.flights_per_route):
            sched_rng = np.random.default_rng(
                np.random.SeedSequence((config.seed, flight_index, 1))
            )
            departure_time = config.start_date + timedelta(
                minutes=int(sched_rng.integers(0, span_minutes))
            )
            route = replace(plan.route, tail_number=plan.tail_numbers[j % len(plan.tail_numbers)])
            flight_id = f"F{flight_index:05d}"
            records = generate_flight(
                route,
                list(config.satellites),
                provider,
                config.link_params,
                _flight_seed(config.seed, flight_index),
                departure_time,
                flight_id,
                config.min_log_altitude_m,
                config.climb_rate_mps,
                config.descent_rate_mps,
            )
            rel_path = f"flights/{flight_id}.csv"
            save_logs(records, os.path.join(out_dir, rel_path))
            files.append({"file": rel_path, "flight_id": flight_id, "rows": len(records)})
            total_rows += len(records)
            for r in records:
                if r.cnr_db is not None:
                    labeled_rows += 1
                    category_counts[bin_cnr(r.cnr_db).label] += 1
            flight_index += 1

    manifest = {
        "flights": flight_index,
        "rows": total_rows,
        "labeled_rows": labeled_rows,
        "category_counts": category_counts,
        "files": files,
        "seed": config.seed,
        "weather": (
            None
            if config.weather is None
            else {"storm_density": config.weather.storm_density, "seed": config.weather.seed}
        ),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return manifest


def sample_cnr_population(
    routes: Sequence[RouteSpec],
    sats: Sequence[GeoSatellite],
    params: LinkModelParams,
    n: int,
    seed: int,
) -> np.ndarray:
    """Draw CNR observations at random points along the given routes.

    Vectorized companion of :func:`synth_cnr` (without weather) used to
    calibrate and verify the default link parameters: sample a route and a
    position along it uniformly, aim at the best satellite, and keep the
    observations above the horizon cut.
    """
    if not routes or not sats:
        raise ValueError("need at least one route and one satellite")
    rng = np.random.default_rng(seed)
    route_idx = rng.integers(0, len(routes), n)
    u = rng.random(n)
    noise = (
        rng.normal(0.0, params.noise_sigma_db, n)
        if params.noise_sigma_db > 0.0
        else np.zeros(n)
    )

    lats = np.empty(n)
    lons = np.empty(n)
    alts = np.empty(n)
    for i, route in enumerate(routes):
        mask = route_idx == i
        if not mask.any():
            continue
        dep, arr = route.departure_pos, route.arrival_pos
        duration_s = haversine_m(dep, arr) / route.ground_speed_mps
        total_s = max(1, math.ceil(duration_s / 60.0 - 1e-9)) * 60.0
        t = u[mask] * total_s
        lats[mask], lons[mask] = slerp_track(dep, arr, u[mask])
        alts[mask] = np.minimum.reduce(
            [
                dep.altitude_m + DEFAULT_CLIMB_RATE_MPS * t,
                np.full(t.shape, route.cruise_altitude_m),
                arr.altitude_m + DEFAULT_DESCENT_RATE_MPS * (total_s - t),
            ]
        )

    best_elevation = np.maximum.reduce([elevations_deg(lats, lons, alts, s) for s in sats])
    visible = best_elevation >= params.horizon_cut_elevation_deg
    cnr = (
        params.cnr_at_zenith_db
        - params.elevation_rolloff_db * (1.0 - np.sin(np.radians(best_elevation[visible])))
        - noise[visible]
    )
    return np.clip(cnr, CNR_MIN_DB, CNR_MAX_DB)


def demo_satellites() -> list[GeoSatellite]:
    """Three GEO slots giving the demo routes overlapping coverage."""
    return [
        GeoSatellite("I5F1", 62.6),
        GeoSatellite("I5F2", -55.0),
        GeoSatellite("I5F3", 179.6),
    ]


def _route(
    dep_iata: str,
    arr_iata: str,
    dep: tuple[float, float, float],
    arr: tuple[float, float, float],
    cruise_m: float,
    speed_mps: float,
    airline: str,
    tails: tuple[str, ...],
) -> RoutePlan:
    return RoutePlan(
        route=RouteSpec(
            departure_airport=dep_iata,
            arrival_airport=arr_iata,
            departure_pos=GeoPosition(*dep),
            arrival_pos=GeoPosition(*arr),
            cruise_altitude_m=cruise_m,
            ground_speed_mps=speed_mps,
            airline_code=airline,
            tail_number=tails[0],
        ),
        tail_numbers=tails,
    )


_SIN = (1.359, 103.989, 7.0)
_LHR = (51.470, -0.454, 25.0)
_DXB = (25.253, 55.365, 19.0)
_JFK = (40.640, -73.779, 4.0)
_FRA = (50.033, 8.570, 111.0)
_HKG = (22.308, 113.915, 9.0)
_SYD = (-33.946, 151.177, 6.0)
_CDG = (49.010, 2.548, 119.0)
_GRU = (-23.432, -46.469, 750.0)


def demo_route_plans() -> list[RoutePlan]:
    """Six long-haul city pairs spanning the demo satellites' footprints."""
    return [
        _route("SIN", "LHR", _SIN, _LHR, 11500.0, 250.0, "SQ", ("9V-SKA", "9V-SKB", "9V-SKM")),
        _route("DXB", "JFK", _DXB, _JFK, 11900.0, 255.0, "EK", ("A6-EDA", "A6-EDB")),
        _route("FRA", "SIN", _FRA, _SIN, 11300.0, 250.0, "LH", ("D-AIMA", "D-AIMB")),
        _route("LHR", "DXB", _LHR, _DXB, 10700.0, 245.0, "BA", ("G-XWBA", "G-XWBB")),
        _route("HKG", "SYD", _HKG, _SYD, 11000.0, 248.0, "CX", ("B-LXA", "B-LXB")),
        _route("CDG", "GRU", _CDG, _GRU, 10600.0, 243.0, "AF", ("F-HRBA", "F-HRBB")),
    ]


def demo_config(
    flights_per_route: int = 5,
    seed: int = 20230301,
    weather: Optional[WeatherSpec] = WeatherSpec(storm_density=6.0, seed=77),
    climb_rate_mps: float = DEFAULT_CLIMB_RATE_MPS,
    descent_rate_mps: float = DEFAULT_DESCENT_RATE_MPS,
) -> GenerationConfig:
    """A ready-to-run generation config over the demo routes and satellites."""
    return GenerationConfig(
        seed=seed,
        flights_per_route=flights_per_route,
        start_date=datetime(2023, 3, 1, tzinfo=timezone.utc),
        span_days=30.0,
        routes=tuple(demo_route_plans()),
        satellites=tuple(demo_satellites()),
        link_params=DEFAULT_LINK_PARAMS,
        weather=weather,
        climb_rate_mps=climb_rate_mps,
        descent_rate_mps=descent_rate_mps,
    )
