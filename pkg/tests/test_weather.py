from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from satlink.geometry import GeoPosition, haversine_m
from satlink.weather import (
    CoverageGapError,
    SyntheticWeather,
    WeatherCell,
    WeatherCsvError,
    WeatherField,
    load_weather_csv,
    save_weather_csv,
    synth_weather_field,
)

H0 = datetime(2023, 3, 5, 12, 0, tzinfo=timezone.utc)


def cell(hour, lat, lon, precip=0.0, cloud=50.0, temp=15.0, wind=4.0):
    return WeatherCell(hour, lat, lon, precip, cloud, temp, wind)


def brute_force_nearest(field: WeatherField, t: datetime, p: GeoPosition) -> WeatherCell:
    """Full scan, minimizing (|dt|, hour, distance, lat, lon) lexicographically."""
    best_key, best_cell = None, None
    for c in field:
        dt = abs((t - c.hour_utc).total_seconds())
        key = (
            dt,
            c.hour_utc,
            haversine_m(p, GeoPosition(c.grid_lat_deg, c.grid_lon_deg)),
            c.grid_lat_deg,
            c.grid_lon_deg,
        )
        if best_key is None or key < best_key:
            best_key, best_cell = key, c
    return best_cell


class TestWeatherCell:
    def test_rejects_sub_hour_timestamp(self):
        with pytest.raises(ValueError, match="hour"):
            cell(H0 + timedelta(minutes=5), 10.0, 20.0)

    def test_rejects_off_grid_coordinates(self):
        with pytest.raises(ValueError, match="grid"):
            cell(H0, 10.05, 20.0)
        assert cell(H0, 10.1, 20.0).grid_lat_deg == 10.1

    @pytest.mark.parametrize("kwargs", [
        {"precip": -0.1},
        {"cloud": 101.0},
        {"wind": -1.0},
    ])
    def test_rejects_out_of_range_variables(self, kwargs):
        with pytest.raises(ValueError):
            cell(H0, 10.0, 20.0, **kwargs)

    def test_rejects_duplicate_keys(self):
        with pytest.raises(ValueError, match="duplicate"):
            WeatherField([cell(H0, 10.0, 20.0), cell(H0, 10.0, 20.0, precip=1.0)])


class TestSyntheticWeather:
    def test_deterministic_in_seed(self):
        a = SyntheticWeather(5.0, 42)
        b = SyntheticWeather(5.0, 42)
        p = GeoPosition(47.33, 8.51, 500.0)
        assert a.cell_at(H0, p) == b.cell_at(H0, p)
        c = SyntheticWeather(5.0, 43)
        samples_differ = any(
            a.cell_at(H0 + timedelta(hours=h), p) != c.cell_at(H0 + timedelta(hours=h), p)
            for h in range(24)
        )
        assert samples_differ

    def test_zero_density_means_zero_precipitation(self):
        provider = SyntheticWeather(0.0, 1)
        rng = np.random.default_rng(0)
        for _ in range(50):
            p = GeoPosition(rng.uniform(-60, 60), rng.uniform(-180, 180))
            at = H0 + timedelta(hours=int(rng.integers(0, 72)))
            assert provider.cell_at(at, p).precipitation_mmh == 0.0

    def test_snaps_to_grid_and_hour(self):
        provider = SyntheticWeather(0.0, 1)
        c = provider.cell_at(H0 + timedelta(minutes=29), GeoPosition(10.04, 19.96))
        assert c.hour_utc == H0
        assert (c.grid_lat_deg, c.grid_lon_deg) == (10.0, 20.0)
        c = provider.cell_at(H0 + timedelta(minutes=31), GeoPosition(10.06, 19.96))
        assert c.hour_utc == H0 + timedelta(hours=1)
        assert c.grid_lat_deg == 10.1
        # Exact half-hour and half-cell ties resolve to the earlier / smaller.
        c = provider.cell_at(H0 + timedelta(minutes=30), GeoPosition(10.05, 20.0))
        assert c.hour_utc == H0
        assert c.grid_lat_deg == 10.0

    def test_materialized_field_matches_provider(self):
        provider = SyntheticWeather(30.0, 7)
        field = synth_weather_field((40.0, 41.0, 5.0, 6.0), (H0, H0 + timedelta(hours=3)), 30.0, 7)
        rng = np.random.default_rng(1)
        # Keep queries snapping inside the materialized hours (12..14) and
        # cell centers (40.0..40.9, 5.0..5.9).
        for _ in range(100):
            p = GeoPosition(rng.uniform(40.0, 40.94), rng.uniform(5.0, 5.94))
            at = H0 + timedelta(minutes=int(rng.integers(0, 150)))
            assert field.lookup_nearest(at, p) == provider.cell_at(at, p)


class TestSynthField:
    def test_cell_count_is_grid_arithmetic(self):
        field = synth_weather_field((40.0, 50.0, 0.0, 10.0), (H0, H0 + timedelta(hours=2)), 5.0, 3)
        assert len(field) == 2 * 100 * 100

    def test_empty_span_rejected(self):
        with pytest.raises(ValueError, match="hour"):
            synth_weather_field((40.0, 41.0, 5.0, 6.0), (H0, H0), 5.0, 3)
        with pytest.raises(ValueError, match="bounds"):
            synth_weather_field((41.0, 40.0, 5.0, 6.0), (H0, H0 + timedelta(hours=1)), 5.0, 3)

    def test_deterministic(self):
        a = synth_weather_field((40.0, 41.0, 5.0, 6.0), (H0, H0 + timedelta(hours=2)), 9.0, 3)
        b = synth_weather_field((40.0, 41.0, 5.0, 6.0), (H0, H0 + timedelta(hours=2)), 9.0, 3)
        assert list(a) == list(b)


class TestLookupNearest:
    def field(self):
        return synth_weather_field((40.0, 42.0, 5.0, 8.0), (H0, H0 + timedelta(hours=3)), 25.0, 11)

    def test_exact_hit(self):
        field = self.field()
        got = field.lookup_nearest(H0 + timedelta(hours=1), GeoPosition(41.2, 6.7))
        assert got.hour_utc == H0 + timedelta(hours=1)
        assert (got.grid_lat_deg, got.grid_lon_deg) == (41.2, 6.7)

    def test_hour_rounding_with_tie_to_earlier(self):
        field = self.field()
        p = GeoPosition(41.0, 6.0)
        assert field.lookup_nearest(H0 + timedelta(minutes=29), p).hour_utc == H0
        assert field.lookup_nearest(H0 + timedelta(minutes=31), p).hour_utc == H0 + timedelta(hours=1)
        assert field.lookup_nearest(H0 + timedelta(minutes=30), p).hour_utc == H0

    def test_matches_brute_force_oracle(self):
        field = synth_weather_field((40.0, 41.5, 5.0, 6.5), (H0, H0 + timedelta(hours=3)), 25.0, 11)
        rng = np.random.default_rng(8)
        for _ in range(250):
            p = GeoPosition(rng.uniform(40.0, 41.45), rng.uniform(5.0, 6.45))
            at = H0 + timedelta(seconds=int(rng.integers(0, 3 * 3600)))
            assert field.lookup_nearest(at, p) == brute_force_nearest(field, at, p)

    def test_attached_center_within_half_cell_diagonal(self):
        field = self.field()
        rng = np.random.default_rng(9)
        for _ in range(300):
            p = GeoPosition(rng.uniform(40.0, 41.95), rng.uniform(5.0, 7.95))
            got = field.lookup_nearest(H0, p)
            center = GeoPosition(got.grid_lat_deg, got.grid_lon_deg)
            assert haversine_m(p, center) <= 7_900.0

    def test_coverage_gap_errors(self):
        field = self.field()
        with pytest.raises(CoverageGapError, match="h from"):
            field.lookup_nearest(H0 + timedelta(hours=4, minutes=1), GeoPosition(41.0, 6.0))
        with pytest.raises(CoverageGapError, match="latitude"):
            field.lookup_nearest(H0, GeoPosition(42.5, 6.0))
        with pytest.raises(CoverageGapError, match="longitude"):
            field.lookup_nearest(H0, GeoPosition(41.0, 9.0))
        # Within one hour / one grid cell of the edge still resolves
        # (last materialized hour is H0+2h).
        assert field.lookup_nearest(H0 + timedelta(hours=3), GeoPosition(41.0, 6.0))
        assert field.lookup_nearest(H0, GeoPosition(42.03, 6.0))


class TestWeatherCsv:
    def test_round_trip_is_lossless_and_stable(self, tmp_path):
        field = synth_weather_field((40.0, 40.5, 5.0, 5.5), (H0, H0 + timedelta(hours=2)), 20.0, 5)
        path = tmp_path / "wx.csv"
        save_weather_csv(field, path)
        loaded = load_weather_csv(path)
        assert list(loaded) == list(field)
        second = tmp_path / "wx2.csv"
        save_weather_csv(loaded, second)
        assert path.read_bytes() == second.read_bytes()

    def test_malformed_rows_reported_with_line_numbers(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(
            "hour_utc,grid_lat,grid_lon,precip_mmh,cloud_pct,temp_c,wind_mps\n"
            "2023-03-05T12:00:00Z,40.0,5.0,0.0,50.0,15.0,4.0\n"
            "2023-03-05T12:00:00Z,40.07,5.0,0.0,50.0,15.0,4.0\n"
            "2023-03-05T12:00:00Z,40.1,5.0,nope,50.0,15.0,4.0\n"
        )
        with pytest.raises(WeatherCsvError) as err:
            load_weather_csv(path)
        lines = [ln for ln, _ in err.value.errors]
        assert lines == [3, 4]

    def test_duplicate_rows_name_both_lines(self, tmp_path):
        path = tmp_path / "dup.csv"
        path.write_text(
            "hour_utc,grid_lat,grid_lon,precip_mmh,cloud_pct,temp_c,wind_mps\n"
            "2023-03-05T12:00:00Z,40.0,5.0,0.0,50.0,15.0,4.0\n"
            "2023-03-05T12:00:00Z,40.0,5.0,1.0,50.0,15.0,4.0\n"
        )
        with pytest.raises(WeatherCsvError, match=r"lines 2 and 3"):
            load_weather_csv(path)

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "hdr.csv"
        path.write_text("a,b,c\n")
        with pytest.raises(WeatherCsvError, match="header"):
            load_weather_csv(path)
