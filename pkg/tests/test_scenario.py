"""Geometry, motion, and Doppler tests."""

import math

import numpy as np
import pytest

from satmimo.constants import C0, EARTH_RADIUS_M
from satmimo.scenario import (
    CarrierPlan,
    GroundStation,
    SatelliteMotion,
    doppler_offset,
    geodetic_to_ecef,
    radial_velocity,
    satellite_position,
    slant_range,
)

MUNICH = GroundStation(id="ut", latitude_deg=48.0736, longitude_deg=11.6305)
SUBSAT = GroundStation(id="sub", latitude_deg=0.0, longitude_deg=7.0)


def geo_sat(**kwargs) -> SatelliteMotion:
    defaults = dict(id="sat", nominal_longitude_deg=7.0, mean_radius_m=42164000.0)
    defaults.update(kwargs)
    return SatelliteMotion(**defaults)


class TestSatellitePosition:
    def test_motionless_satellite(self):
        sat = geo_sat(radial_oscillation_amplitude_m=0.0)
        for t in (0.0, 1234.5, 86400.0):
            p = satellite_position(sat, t)
            assert np.linalg.norm(p) == pytest.approx(42164000.0)
            assert math.degrees(math.atan2(p[1], p[0])) == pytest.approx(7.0)
            assert p[2] == 0.0

    def test_sine_extremum(self):
        sat = geo_sat(radial_oscillation_amplitude_m=20e3, oscillation_period_s=86400.0)
        p = satellite_position(sat, 86400.0 / 4.0)
        assert np.linalg.norm(p) == pytest.approx(42164000.0 + 20e3, abs=1e-6)

    def test_max_radial_speed_matches_finite_differences(self):
        # analytic derivative of the sinusoid against a position-difference oracle
        amp, period = 20e3, 86400.0
        sat = geo_sat(radial_oscillation_amplitude_m=amp, oscillation_period_s=period)
        expected_max = 2.0 * np.pi * amp / period
        assert expected_max == pytest.approx(1.454, abs=2e-3)
        dt = 1e-3
        t = np.arange(0.0, period, 600.0)
        r_plus = np.linalg.norm(satellite_position(sat, t + dt), axis=0)
        r_minus = np.linalg.norm(satellite_position(sat, t), axis=0)
        speeds = np.abs(r_plus - r_minus) / dt
        assert speeds.max() == pytest.approx(expected_max, rel=1e-4)

    def test_exact_periodicity(self):
        sat = geo_sat(radial_oscillation_amplitude_m=25e3, oscillation_phase_rad=0.3)
        t = np.array([0.0, 1000.0, 43210.0])
        assert np.allclose(
            satellite_position(sat, t), satellite_position(sat, t + 86400.0), atol=1e-6
        )

    def test_negative_time_rejected(self):
        with pytest.raises(ValueError):
            satellite_position(geo_sat(), -1.0)


class TestSlantRange:
    def test_subsatellite_point_is_collinear(self):
        sat = geo_sat()
        d = slant_range(SUBSAT, sat, 0.0)
        assert d == pytest.approx(42164000.0 - EARTH_RADIUS_M, abs=1e-6)

    def test_munich_range_against_independent_oracle(self):
        # independent spherical-triangle computation of the same distance
        sat = geo_sat()
        lat, lon = math.radians(48.0736), math.radians(11.6305)
        cos_gamma = math.cos(lat) * math.cos(lon - math.radians(7.0))
        oracle = math.sqrt(
            EARTH_RADIUS_M**2 + 42164000.0**2
            - 2.0 * EARTH_RADIUS_M * 42164000.0 * cos_gamma
        )
        d = slant_range(MUNICH, sat, 0.0)
        assert d == pytest.approx(oracle, rel=1e-12)
        assert 38_000e3 < d < 39_500e3

    def test_colocated_satellites_equal_ranges(self):
        sat_a = geo_sat(id="a")
        sat_b = geo_sat(id="b")
        for station in (MUNICH, SUBSAT):
            assert slant_range(station, sat_a, 0.0) == slant_range(station, sat_b, 0.0)

    def test_continuity(self):
        sat = geo_sat(radial_oscillation_amplitude_m=25e3)
        v_max = 2.0 * np.pi * 25e3 / 86400.0
        t = np.arange(0.0, 86400.0, 997.0)
        d0 = slant_range(MUNICH, sat, t)
        d1 = slant_range(MUNICH, sat, t + 1.0)
        assert np.all(np.abs(d1 - d0) <= v_max * 1.0 + 1e-9)


class TestRadialVelocity:
    def test_zero_for_static_satellite(self):
        sat = geo_sat()
        for t in (0.0, 55.0, 86400.0):
            assert radial_velocity(MUNICH, sat, t) == 0.0

    def test_subsatellite_geometry_degenerates_to_1d(self):
        amp, period = 20e3, 86400.0
        sat = geo_sat(radial_oscillation_amplitude_m=amp, oscillation_period_s=period)
        t = 7000.0
        expected = amp * (2 * np.pi / period) * math.cos(2 * np.pi * t / period)
        assert radial_velocity(SUBSAT, sat, t) == pytest.approx(expected, rel=1e-9)

    def test_against_finite_difference_oracle_over_a_day(self):
        amp, period = 20e3, 86400.0
        sat = geo_sat(radial_oscillation_amplitude_m=amp, oscillation_period_s=period)
        bound = 2 * np.pi * amp / period
        t = np.arange(1.0, 86400.0, 1.0)
        v = radial_velocity(MUNICH, sat, t)
        assert np.all(np.abs(v) <= bound)
        # central difference at 1 ms; float64 cancellation on ~4e7 m ranges
        # floors the oracle accuracy near 1e-5 m/s
        dt = 1e-3
        sample = t[::600]
        fd = (slant_range(MUNICH, sat, sample + dt) - slant_range(MUNICH, sat, sample - dt)) / (2 * dt)
        assert np.allclose(radial_velocity(MUNICH, sat, sample), fd, atol=2e-5)


class TestDopplerOffset:
    def test_no_motion_no_shift(self):
        assert doppler_offset(24.5e9, 0.0) == 0.0

    def test_approaching_one_meter_per_second(self):
        # high-precision oracle: exact relativistic expression at 50 digits
        from decimal import Decimal, getcontext

        getcontext().prec = 50
        c = Decimal(299_792_458)
        v = Decimal(-1)
        f = Decimal("24.5e9")
        oracle = float(f * ((c - v) / (c + v)).sqrt() - f)
        assert oracle == pytest.approx(81.7, abs=0.1)
        assert doppler_offset(24.5e9, -1.0) == pytest.approx(oracle, abs=1e-6)

    def test_odd_symmetry_to_first_order(self):
        f = 24.5e9
        for v in (0.1, 1.0, 1.84, 100.0):
            residual = doppler_offset(f, v) + doppler_offset(f, -v)
            assert abs(residual) <= 4.0 * (v / C0) ** 2 * f + 1e-9

    def test_superluminal_rejected(self):
        with pytest.raises(ValueError):
            doppler_offset(1e9, C0)


class TestValidation:
    def test_ground_station_bounds(self):
        with pytest.raises(ValueError):
            GroundStation(id="x", latitude_deg=91.0, longitude_deg=0.0)
        with pytest.raises(ValueError):
            GroundStation(id="x", latitude_deg=0.0, longitude_deg=181.0)
        with pytest.raises(ValueError):
            GroundStation(id="x", latitude_deg=0.0, longitude_deg=0.0, noise_variance=0.0)

    def test_satellite_bounds(self):
        with pytest.raises(ValueError):
            geo_sat(mean_radius_m=1000.0)
        with pytest.raises(ValueError):
            geo_sat(oscillation_period_s=0.0)
        with pytest.raises(ValueError):
            geo_sat(radial_oscillation_amplitude_m=-1.0)

    def test_carrier_plan(self):
        with pytest.raises(ValueError):
            CarrierPlan(uplink_freqs_hz=(13e9, 13e9), downlink_freq_hz=11.5e9,
                        reference_tone_freqs_hz=(15e3, 20e3))
        with pytest.raises(ValueError):
            CarrierPlan(uplink_freqs_hz=(13e9,), downlink_freq_hz=11.5e9,
                        reference_tone_freqs_hz=(15e3,), rolloff=1.5)

    def test_ecef_roundtrip_radius(self):
        p = geodetic_to_ecef(48.0, 11.6, 500.0)
        assert np.linalg.norm(p) == pytest.approx(EARTH_RADIUS_M + 500.0)
